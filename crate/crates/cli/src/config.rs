//! Declarative run configuration, schema-validated before any computation.
//! Every emitted report embeds the fully resolved config so a run can be
//! reproduced from the report alone.

use serde::{Deserialize, Serialize};

use randconley::config::{GridSpec, SetSpec};
use randconley::enclosure::{FieldSpec, Integrator, MapFamily};
use randconley::harness::CheckKind;
use randconley::noise::NoiseModel;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowCfg {
    pub half: usize,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetsCfg {
    pub n: SetSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComputeCfg {
    #[serde(default = "one")]
    pub eps_layers: u32,
    #[serde(default = "one")]
    pub dilation_k: u32,
    /// Optional perturbation sweep appended to the pipeline run.
    #[serde(default)]
    pub perturb_deltas: Vec<f64>,
}

fn one() -> u32 {
    1
}

impl Default for ComputeCfg {
    fn default() -> Self {
        ComputeCfg { eps_layers: 1, dilation_k: 1, perturb_deltas: Vec::new() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCfg {
    pub lambdas: Vec<f64>,
    #[serde(default = "default_checks")]
    pub checks: Vec<CheckKind>,
    #[serde(default = "one")]
    pub eps_layers: u32,
    #[serde(default = "one")]
    pub dilation_k: u32,
    #[serde(default)]
    pub nontrivial_at_lambda0_asserted: bool,
}

fn default_checks() -> Vec<CheckKind> {
    vec![CheckKind::Isolating]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimehCfg {
    pub field: FieldSpec,
    pub h_list: Vec<f64>,
    pub integrator: Integrator,
    #[serde(default = "one_usize")]
    pub substeps: usize,
    pub lambdas: Vec<f64>,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairCfg {
    pub n: SetSpec,
    pub dilation_k: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivCfg {
    pub pair1: PairCfg,
    pub pair2: PairCfg,
    #[serde(default = "one")]
    pub eps_layers: u32,
}

/// One declarative run: the system, the noise, the grid, the window, the
/// set definitions, and per-command options.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub system: MapFamily,
    pub noise: NoiseModel,
    pub grid: GridSpec,
    pub window: WindowCfg,
    #[serde(default)]
    pub sets: Option<SetsCfg>,
    #[serde(default)]
    pub compute: Option<ComputeCfg>,
    #[serde(default)]
    pub sweep: Option<SweepCfg>,
    #[serde(default)]
    pub timeh: Option<TimehCfg>,
    #[serde(default)]
    pub equiv: Option<EquivCfg>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.noise.validate().map_err(|e| format!("noise: {e}"))?;
        self.grid.build().map_err(|e| format!("grid: {e}"))?;
        self.system
            .validate(self.noise.dims())
            .map_err(|e| format!("system: {e}"))?;
        if self.system.dims() != self.grid.lo.len() {
            return Err(format!(
                "system: map dimension {} does not match grid dimension {}",
                self.system.dims(),
                self.grid.lo.len()
            ));
        }
        if self.window.half == 0 {
            return Err("window: half must be >= 1".into());
        }
        if self.window.seeds.is_empty() {
            return Err("window: need at least one seed".into());
        }
        if let Some(sw) = &self.sweep {
            if sw.lambdas.is_empty() {
                return Err("sweep: lambdas must be nonempty".into());
            }
        }
        if let Some(th) = &self.timeh {
            if th.h_list.iter().any(|h| *h <= 0.0) {
                return Err("timeh: h_list values must be positive".into());
            }
        }
        Ok(())
    }
}
