//! The four pipeline drivers and the report re-verification path. Reports
//! are deterministic: timing goes to a sibling file, never into the report.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use randconley::boxset::BoxSet;
use randconley::conley::Verdict;
use randconley::enclosure::{build_enclosure, FiberedSet};
use randconley::harness::{
    continuation_sweep, perturbation_sweep, reliable_range_of, run_pipeline, time_h_check,
    wazewski_report, EnsembleReport, PerturbationReport, PipelineReport, SweepConfig,
    TimeHConfig, TimeHReport, WazewskiReport,
};
use randconley::noise::NoisePath;
use randconley::shiftequiv::{equivalence_via_common_block, WitnessFiberChecks};
use randconley::conley::build_filtration_pair;

use crate::config::RunConfig;

pub enum Outcome {
    Ok,
    CheckFailed,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ComputeReport {
    pub tool_version: String,
    pub command: String,
    pub config: RunConfig,
    pub per_seed: Vec<PipelineReport>,
    pub wazewski: WazewskiReport,
    pub perturbation: Option<PerturbationReport>,
    pub all_checks_passed: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepReport {
    pub tool_version: String,
    pub command: String,
    pub config: RunConfig,
    pub ensemble: EnsembleReport,
    pub all_checks_passed: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TimehOut {
    pub tool_version: String,
    pub command: String,
    pub config: RunConfig,
    pub report: TimeHReport,
    pub all_checks_passed: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EquivSeedReport {
    pub seed: u64,
    pub zero_failed_on_reliable: bool,
    pub offsets_r: Vec<usize>,
    pub offsets_s: Vec<usize>,
    pub checks: Vec<WitnessFiberChecks>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EquivReport {
    pub tool_version: String,
    pub command: String,
    pub config: RunConfig,
    pub per_seed: Vec<EquivSeedReport>,
    pub all_checks_passed: bool,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable report");
    bytes.push(b'\n');
    fs::write(dir.join(name), bytes)
}

fn write_timing(dir: &Path, name: &str, millis: u128) -> std::io::Result<()> {
    write_json(dir, name, &json!({ "wall_ms": millis as u64 }))
}

fn rects(set: &BoxSet) -> Vec<(Vec<f64>, Vec<f64>)> {
    set.members().iter().map(|&b| set.grid().box_bounds(b)).collect()
}

pub fn run_compute(cfg: &RunConfig, out_dir: &Path) -> anyhow::Result<Outcome> {
    let started = std::time::Instant::now();
    let compute = cfg.compute.clone().unwrap_or_default();
    let sets = cfg
        .sets
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("config error: [sets] section required for compute"))?;
    let mut per_seed = Vec::new();
    let mut nonempty_flags = Vec::new();
    let mut all_ok = true;
    let mut perturbation = None;
    for &seed in &cfg.window.seeds {
        let out = run_pipeline(
            &cfg.system,
            &cfg.noise,
            &cfg.grid,
            cfg.window.half,
            seed,
            &sets.n,
            compute.eps_layers,
            compute.dilation_k,
        )?;
        let reliable = out.report.reliable;
        let iso_ok = out
            .report
            .fibers
            .iter()
            .filter(|f| reliable.0 <= f.t && f.t <= reliable.1)
            .all(|f| f.isolating == Verdict::Holds);
        let pair_ok = out.report.pair_dilation_k.is_some();
        all_ok &= iso_ok && pair_ok;
        nonempty_flags.push(
            out.report
                .fibers
                .iter()
                .filter(|f| reliable.0 <= f.t && f.t <= reliable.1)
                .any(|f| f.inv_boxes > 0),
        );

        // box dumps and plot rectangles for this seed
        let grid = cfg.grid.build()?;
        let path = NoisePath::sample(&cfg.noise, seed, cfg.window.half)?;
        let e = build_enclosure(&cfg.system, &grid, &path)?;
        let n = FiberedSet::uniform(cfg.window.half, sets.n.cover(&grid)?);
        let inv = randconley::conley::invariant_set(&e, &n)?;
        let mut csv = String::from("set,fiber,");
        let d = grid.dims();
        let header: Vec<String> = (0..d)
            .map(|i| format!("lo{i}"))
            .chain((0..d).map(|i| format!("hi{i}")))
            .collect();
        csv.push_str(&header.join(","));
        csv.push('\n');
        let mut plot_fibers = Vec::new();
        let (t_lo, t_hi) = n.t_range();
        for t in t_lo..=t_hi {
            let mut row = |name: &str, set: &BoxSet| {
                for (lo, hi) in rects(set) {
                    let cells: Vec<String> = lo
                        .iter()
                        .map(|v| format!("{v}"))
                        .chain(hi.iter().map(|v| format!("{v}")))
                        .collect();
                    csv.push_str(&format!("{name},{t},{}\n", cells.join(",")));
                }
            };
            row("n", n.get(t)?);
            row("inv", inv.inv.get(t)?);
            let exit = if t < t_hi {
                randconley::conley::exit_set(&e, &n, t)?
            } else {
                BoxSet::empty(grid.clone())
            };
            row("exit", &exit);
            plot_fibers.push(json!({
                "t": t,
                "n": rects(n.get(t)?),
                "inv": rects(inv.inv.get(t)?),
                "exit": rects(&exit),
            }));
        }
        fs::create_dir_all(out_dir)?;
        fs::write(out_dir.join(format!("boxes_seed{seed}.csv")), csv)?;
        write_json(out_dir, &format!("plot_seed{seed}.json"), &json!({ "fibers": plot_fibers }))?;

        if !compute.perturb_deltas.is_empty() && perturbation.is_none() {
            if let Some(pair) = &out.pair {
                perturbation =
                    Some(perturbation_sweep(&out.enclosure, pair, &compute.perturb_deltas)?);
            }
        }
        per_seed.push(out.report);
    }

    let lambda0_cert = per_seed.first().and_then(|r| r.certificate.as_ref());
    let wazewski = wazewski_report(lambda0_cert, false, all_ok, &nonempty_flags, &cfg.noise);

    let report = ComputeReport {
        tool_version: randconley::VERSION.into(),
        command: "compute".into(),
        config: cfg.clone(),
        per_seed,
        wazewski,
        perturbation,
        all_checks_passed: all_ok,
    };
    write_json(out_dir, "compute_report.json", &report)?;
    write_timing(out_dir, "compute_report.timing.json", started.elapsed().as_millis())?;
    Ok(if all_ok { Outcome::Ok } else { Outcome::CheckFailed })
}

fn sweep_config_from(cfg: &RunConfig) -> anyhow::Result<SweepConfig> {
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("config error: [sweep] section required"))?;
    let sets = cfg
        .sets
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("config error: [sets] section required"))?;
    Ok(SweepConfig {
        system: cfg.system.clone(),
        noise: cfg.noise.clone(),
        grid: cfg.grid.clone(),
        half_window: cfg.window.half,
        lambdas: sw.lambdas.clone(),
        seeds: cfg.window.seeds.clone(),
        n_set: sets.n.clone(),
        checks: sw.checks.clone(),
        eps_layers: sw.eps_layers,
        dilation_k: sw.dilation_k,
        nontrivial_at_lambda0_asserted: sw.nontrivial_at_lambda0_asserted,
    })
}

pub fn run_sweep(cfg: &RunConfig, out_dir: &Path) -> anyhow::Result<Outcome> {
    let started = std::time::Instant::now();
    let ensemble = continuation_sweep(&sweep_config_from(cfg)?)?;
    let ok = ensemble.conclusion.is_some();

    // CSV summary of the cells
    let mut csv = String::from(
        "lambda,seed,isolating_on_reliable,inv_boxes_fiber0,certificate\n",
    );
    for c in &ensemble.cells {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            c.lambda,
            c.seed,
            c.isolating_on_reliable,
            c.inv_boxes_fiber0,
            c.certificate
                .as_ref()
                .map(|ct| format!("{:?}", ct.verdict))
                .unwrap_or_else(|| "none".into())
        ));
    }
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("sweep_cells.csv"), csv)?;

    let report = SweepReport {
        tool_version: randconley::VERSION.into(),
        command: "sweep".into(),
        config: cfg.clone(),
        ensemble,
        all_checks_passed: ok,
    };
    write_json(out_dir, "sweep_report.json", &report)?;
    write_timing(out_dir, "sweep_report.timing.json", started.elapsed().as_millis())?;
    Ok(if ok { Outcome::Ok } else { Outcome::CheckFailed })
}

pub fn run_timeh(cfg: &RunConfig, out_dir: &Path) -> anyhow::Result<Outcome> {
    let started = std::time::Instant::now();
    let th = cfg
        .timeh
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("config error: [timeh] section required"))?;
    let sets = cfg
        .sets
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("config error: [sets] section required"))?;
    let report = time_h_check(&TimeHConfig {
        field: th.field.clone(),
        h_list: th.h_list.clone(),
        integrator: th.integrator,
        substeps: th.substeps,
        noise: cfg.noise.clone(),
        grid: cfg.grid.clone(),
        half_window: cfg.window.half,
        lambdas: th.lambdas.clone(),
        seeds: cfg.window.seeds.clone(),
        n_set: sets.n.clone(),
    })?;
    let ok = report.inference.is_some();
    let out = TimehOut {
        tool_version: randconley::VERSION.into(),
        command: "timeh".into(),
        config: cfg.clone(),
        report,
        all_checks_passed: ok,
    };
    write_json(out_dir, "timeh_report.json", &out)?;
    write_timing(out_dir, "timeh_report.timing.json", started.elapsed().as_millis())?;
    Ok(if ok { Outcome::Ok } else { Outcome::CheckFailed })
}

pub fn run_equiv(cfg: &RunConfig, out_dir: &Path) -> anyhow::Result<Outcome> {
    let started = std::time::Instant::now();
    let eq = cfg
        .equiv
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("config error: [equiv] section required"))?;
    let grid = cfg.grid.build()?;
    let mut per_seed = Vec::new();
    let mut all_ok = true;
    for &seed in &cfg.window.seeds {
        let path = NoisePath::sample(&cfg.noise, seed, cfg.window.half)?;
        let e = build_enclosure(&cfg.system, &grid, &path)?;
        let reliable = reliable_range_of(cfg.window.half);
        let result = (|| -> randconley::Result<EquivSeedReport> {
            let n1 = FiberedSet::uniform(cfg.window.half, eq.pair1.n.cover(&grid)?);
            let n2 = FiberedSet::uniform(cfg.window.half, eq.pair2.n.cover(&grid)?);
            let p1 = build_filtration_pair(&e, &n1, eq.pair1.dilation_k)?;
            let p2 = build_filtration_pair(&e, &n2, eq.pair2.dilation_k)?;
            let w = equivalence_via_common_block(&e, &p1, &p2, eq.eps_layers)?;
            Ok(EquivSeedReport {
                seed,
                zero_failed_on_reliable: w.zero_failed_on(reliable),
                offsets_r: w.r.offsets.clone(),
                offsets_s: w.s.offsets.clone(),
                checks: w.checks,
                error: None,
            })
        })();
        match result {
            Ok(rep) => {
                all_ok &= rep.zero_failed_on_reliable;
                per_seed.push(rep);
            }
            Err(err) => {
                all_ok = false;
                per_seed.push(EquivSeedReport {
                    seed,
                    zero_failed_on_reliable: false,
                    offsets_r: Vec::new(),
                    offsets_s: Vec::new(),
                    checks: Vec::new(),
                    error: Some(err.to_string()),
                });
            }
        }
    }
    let report = EquivReport {
        tool_version: randconley::VERSION.into(),
        command: "equiv".into(),
        config: cfg.clone(),
        per_seed,
        all_checks_passed: all_ok,
    };
    write_json(out_dir, "equiv_report.json", &report)?;
    write_timing(out_dir, "equiv_report.timing.json", started.elapsed().as_millis())?;
    Ok(if all_ok { Outcome::Ok } else { Outcome::CheckFailed })
}

/// Re-runs the embedded config of a report into a scratch directory and
/// compares the regenerated report byte-for-byte.
pub fn verify_report(report_path: &Path, scratch: &Path) -> anyhow::Result<Outcome> {
    let original = fs::read(report_path)?;
    let value: serde_json::Value = serde_json::from_slice(&original)?;
    let command = value
        .get("command")
        .and_then(|c| c.as_str())
        .ok_or_else(|| anyhow::anyhow!("config error: report has no command field"))?
        .to_string();
    let cfg: RunConfig = serde_json::from_value(
        value
            .get("config")
            .cloned()
            .ok_or_else(|| anyhow::anyhow!("config error: report has no embedded config"))?,
    )?;
    cfg.validate().map_err(|e| anyhow::anyhow!("config error: {e}"))?;
    let name = match command.as_str() {
        "compute" => {
            run_compute(&cfg, scratch)?;
            "compute_report.json"
        }
        "sweep" => {
            run_sweep(&cfg, scratch)?;
            "sweep_report.json"
        }
        "timeh" => {
            run_timeh(&cfg, scratch)?;
            "timeh_report.json"
        }
        "equiv" => {
            run_equiv(&cfg, scratch)?;
            "equiv_report.json"
        }
        other => return Err(anyhow::anyhow!("config error: unknown command {other}")),
    };
    let regenerated = fs::read(scratch.join(name))?;
    if regenerated == original {
        println!("report reproduced byte-for-byte");
        Ok(Outcome::Ok)
    } else {
        println!("report differs from a fresh run of its embedded config");
        Ok(Outcome::CheckFailed)
    }
}
