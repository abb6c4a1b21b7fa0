//! Invariant sets, omega-limits, exit sets, isolating neighborhoods and
//! blocks, chain neighborhoods, filtration pairs, pointed-space maps, and
//! index-triviality certificates.
//!
//! Truncated-window invariant sets are OUTER approximations: "isolating"
//! verdicts are sound certificates, while failures may be padding artifacts
//! of the grid or the window. Reports carry this asymmetry.

use serde::{Deserialize, Serialize};

use crate::boxset::{BoxId, BoxSet};
use crate::enclosure::{build_enclosure, FiberedEnclosure, FiberedSet, MapFamily};
use crate::error::{Error, Result};
use crate::graph::{quotient_graph, LayeredSystem, PointedGraph};
use crate::noise::NoisePath;

/// Per-fiber check outcome. Edge fibers that cannot be checked on a finite
/// window are reported as `Unchecked`, never silently passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    Fails,
    Unchecked,
}

/// Checks indexed by fiber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberedVerdicts {
    pub t_lo: i64,
    pub verdicts: Vec<Verdict>,
}

impl FiberedVerdicts {
    pub fn get(&self, t: i64) -> Option<Verdict> {
        let i = t - self.t_lo;
        if i < 0 {
            return None;
        }
        self.verdicts.get(i as usize).copied()
    }

    pub fn all_hold_on(&self, range: (i64, i64)) -> bool {
        (range.0..=range.1).all(|t| self.get(t) == Some(Verdict::Holds))
    }

    pub fn none_fail_on(&self, range: (i64, i64)) -> bool {
        (range.0..=range.1).all(|t| self.get(t) != Some(Verdict::Fails))
    }
}

/// Truncated invariant set with the fiber interval on which it is reliable.
#[derive(Debug, Clone)]
pub struct InvResult {
    pub inv: FiberedSet,
    pub half_window: usize,
    pub reliable: (i64, i64),
}

/// Two-sided reachability in the layered graph over `n`: a box survives at
/// fiber `t` when it is reachable from fiber `-T` and reaches fiber `+T`
/// inside `n`.
pub fn invariant_set(e: &FiberedEnclosure, n: &FiberedSet) -> Result<InvResult> {
    let (t_lo, t_hi) = e.t_set_range();
    if n.t_range() != (t_lo, t_hi) {
        return Err(Error::FiberOutOfWindow { t: n.t_range().0, lo: t_lo, hi: t_hi });
    }
    // forward reach
    let mut fwd: Vec<BoxSet> = Vec::with_capacity((t_hi - t_lo + 1) as usize);
    fwd.push(strip_outer(n.get(t_lo)?.clone()));
    for t in t_lo..t_hi {
        let prev = fwd.last().unwrap();
        let img = e.image_of(t, prev)?;
        fwd.push(strip_outer(img.intersect(n.get(t + 1)?)?));
    }
    // backward reach
    let len = fwd.len();
    let mut bwd: Vec<BoxSet> = vec![BoxSet::empty(e.grid().clone()); len];
    bwd[len - 1] = strip_outer(n.get(t_hi)?.clone());
    for t in (t_lo..t_hi).rev() {
        let next = &bwd[(t + 1 - t_lo) as usize];
        let pre = e.preimage(t, next)?;
        bwd[(t - t_lo) as usize] = strip_outer(pre.intersect(n.get(t)?)?);
    }
    let sets: Vec<BoxSet> = fwd
        .iter()
        .zip(&bwd)
        .map(|(f, b)| f.intersect(b))
        .collect::<Result<_>>()?;
    let inv = FiberedSet::new(e.grid().clone(), t_lo, sets)?;
    Ok(InvResult { inv, half_window: e.half_window(), reliable: e.reliable_range() })
}

fn strip_outer(s: BoxSet) -> BoxSet {
    s.with_outer(false)
}

/// Truncated tail union `U_{k=n0..T} phi^k(D at fiber -k)` at fiber 0.
pub fn omega_limit(e: &FiberedEnclosure, d: &FiberedSet, n0: usize) -> Result<BoxSet> {
    let half = e.half_window();
    if n0 >= half {
        return Err(Error::WindowExhausted { k: n0 as i64, half_window: half });
    }
    let mut acc = BoxSet::empty(e.grid().clone());
    for k in n0..=half {
        let img = e.iterate_image(d, -(k as i64), k as i64)?;
        acc = acc.union(&strip_outer(img))?;
    }
    Ok(acc)
}

/// Boxes of `N_t` whose forward image is not contained in the interior of
/// `N_{t+1}`. Both characterizations are computed and asserted equal.
pub fn exit_set(e: &FiberedEnclosure, n: &FiberedSet, t: i64) -> Result<BoxSet> {
    let (mlo, mhi) = e.t_map_range();
    if t < mlo || t > mhi {
        return Err(Error::FiberOutOfWindow { t, lo: mlo, hi: mhi });
    }
    let nt = n.get(t)?;
    let int_next = n.get(t + 1)?.interior();
    // direct formula
    let mut ids: Vec<BoxId> = Vec::new();
    for &b in nt.members() {
        let (targets, outer) = e.forward(t, b)?;
        let inside = !outer && targets.iter().all(|&x| int_next.contains(BoxId(x)));
        if !inside {
            ids.push(b);
        }
    }
    let direct = BoxSet::from_ids(e.grid().clone(), ids);
    // adjoint formula: N_t ∩ preimage(complement of interior)
    let dual = nt.intersect(&e.preimage(t, &int_next.complement())?)?;
    let dual = strip_outer(dual);
    debug_assert_eq!(direct, dual, "exit-set characterizations disagree at fiber {t}");
    if direct != dual {
        return Err(Error::HypothesisFailed(format!(
            "exit-set dual formulas disagree at fiber {t}"
        )));
    }
    Ok(direct)
}

/// `Inv N ⊂ int N` per fiber.
pub fn is_isolating_neighborhood(
    e: &FiberedEnclosure,
    n: &FiberedSet,
) -> Result<FiberedVerdicts> {
    let inv = invariant_set(e, n)?;
    let (t_lo, t_hi) = n.t_range();
    let verdicts = (t_lo..=t_hi)
        .map(|t| {
            let ok = inv.inv.get(t).unwrap().is_subset_of(&n.get(t).unwrap().interior());
            if ok {
                Verdict::Holds
            } else {
                Verdict::Fails
            }
        })
        .collect();
    Ok(FiberedVerdicts { t_lo, verdicts })
}

/// One-step image ∩ N ∩ one-step preimage ⊂ int N, per fiber. Window edges
/// are reported unchecked.
pub fn is_isolating_block(e: &FiberedEnclosure, n: &FiberedSet) -> Result<FiberedVerdicts> {
    let (t_lo, t_hi) = n.t_range();
    let verdicts = (t_lo..=t_hi)
        .map(|t| {
            if t == t_lo || t == t_hi {
                return Ok(Verdict::Unchecked);
            }
            let img = strip_outer(e.iterate_image(n, t - 1, 1)?);
            let pre = strip_outer(e.preimage(t, n.get(t + 1)?)?);
            let triple = img.intersect(n.get(t)?)?.intersect(&pre)?;
            Ok(if triple.is_subset_of(&n.get(t)?.interior()) {
                Verdict::Holds
            } else {
                Verdict::Fails
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FiberedVerdicts { t_lo, verdicts })
}

/// Fibered least fixpoint of the chain construction: `U` grows forward by
/// dilated images, `V` backward by preimages of dilations; returns
/// `U ∩ V ∩ N`. Window edges are frozen.
pub fn chain_neighborhood(
    e: &FiberedEnclosure,
    n: &FiberedSet,
    s: &FiberedSet,
    eps_layers: u32,
) -> Result<FiberedSet> {
    if eps_layers == 0 {
        return Err(Error::Config("eps_layers must be >= 1".into()));
    }
    let (t_lo, t_hi) = n.t_range();
    let idx = |t: i64| (t - t_lo) as usize;
    let mut u: Vec<BoxSet> =
        (t_lo..=t_hi).map(|t| s.get(t).map(|b| strip_outer(b.clone()))).collect::<Result<_>>()?;
    loop {
        let mut changed = false;
        for t in t_lo + 1..=t_hi {
            let step = strip_outer(e.image_of(t - 1, &u[idx(t - 1)])?).dilate(eps_layers);
            let merged = u[idx(t)].union(&step)?;
            if merged != u[idx(t)] {
                u[idx(t)] = merged;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut v: Vec<BoxSet> =
        (t_lo..=t_hi).map(|t| s.get(t).map(|b| strip_outer(b.clone()))).collect::<Result<_>>()?;
    loop {
        let mut changed = false;
        for t in (t_lo..t_hi).rev() {
            let step = strip_outer(e.preimage(t, &v[idx(t + 1)].dilate(eps_layers))?);
            let merged = v[idx(t)].union(&step)?;
            if merged != v[idx(t)] {
                v[idx(t)] = merged;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let sets: Vec<BoxSet> = (t_lo..=t_hi)
        .map(|t| u[idx(t)].intersect(&v[idx(t)])?.intersect(n.get(t)?))
        .collect::<Result<_>>()?;
    FiberedSet::new(e.grid().clone(), t_lo, sets)
}

/// Chain neighborhood verified to be an isolating block on the reliable
/// range, retrying with smaller dilation radii down to 1.
pub fn block_from_chain(
    e: &FiberedEnclosure,
    n: &FiberedSet,
    s: &FiberedSet,
    eps_layers: u32,
) -> Result<(FiberedSet, u32)> {
    let reliable = e.reliable_range();
    let mut eps = eps_layers.max(1);
    loop {
        let b = chain_neighborhood(e, n, s, eps)?;
        if b.is_empty() {
            return Ok((b, eps));
        }
        let check = is_isolating_block(e, &b)?;
        if check.none_fail_on(reliable) {
            return Ok((b, eps));
        }
        if eps == 1 {
            return Err(Error::NoBlockAtResolution);
        }
        eps -= 1;
    }
}

/// The three filtration-pair axioms evaluated on one fiber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxiomTriple {
    /// (a) cl(N \ L) isolates: Inv(N\L) ⊂ int(N\L).
    pub isolating: Verdict,
    /// (b) L is a neighborhood of the exit set of N in N.
    pub exit_in_l: Verdict,
    /// (c) the image of L misses N \ L on the next fiber.
    pub l_maps_off: Verdict,
}

impl AxiomTriple {
    pub fn all_hold(&self) -> bool {
        self.isolating == Verdict::Holds
            && self.exit_in_l == Verdict::Holds
            && self.l_maps_off == Verdict::Holds
    }

    pub fn any_fail(&self) -> bool {
        self.isolating == Verdict::Fails
            || self.exit_in_l == Verdict::Fails
            || self.l_maps_off == Verdict::Fails
    }
}

/// A verified (or reported-on) pair `(N, L)` with its axiom report.
#[derive(Debug, Clone)]
pub struct FiltrationPair {
    pub n: FiberedSet,
    pub l: FiberedSet,
    pub axioms: Vec<AxiomTriple>,
    pub t_lo: i64,
    /// Inv(N \ L) empty on the reliable range.
    pub degenerate: bool,
    pub dilation_k: u32,
}

impl FiltrationPair {
    pub fn axioms_at(&self, t: i64) -> Option<&AxiomTriple> {
        let i = t - self.t_lo;
        if i < 0 {
            return None;
        }
        self.axioms.get(i as usize)
    }

    pub fn verified_on(&self, range: (i64, i64)) -> bool {
        (range.0..=range.1).all(|t| self.axioms_at(t).map_or(false, |a| !a.any_fail()))
    }
}

/// Evaluates the three axioms of a candidate pair per fiber.
pub fn verify_filtration_pair(
    e: &FiberedEnclosure,
    n: &FiberedSet,
    l: &FiberedSet,
) -> Result<(Vec<AxiomTriple>, bool)> {
    let (t_lo, t_hi) = n.t_range();
    for t in t_lo..=t_hi {
        if !l.get(t)?.is_subset_of(n.get(t)?) {
            return Err(Error::HypothesisFailed(format!("L not inside N at fiber {t}")));
        }
    }
    let m = n.difference(l)?;
    let inv = invariant_set(e, &m)?;
    let mut axioms = Vec::with_capacity((t_hi - t_lo + 1) as usize);
    for t in t_lo..=t_hi {
        let isolating = if inv.inv.get(t)?.is_subset_of(&m.get(t)?.interior()) {
            Verdict::Holds
        } else {
            Verdict::Fails
        };
        let exit_in_l = if t < t_hi {
            let ex = exit_set(e, n, t)?;
            if ex.dilate(1).intersect(n.get(t)?)?.is_subset_of(l.get(t)?) {
                Verdict::Holds
            } else {
                Verdict::Fails
            }
        } else {
            Verdict::Unchecked
        };
        let l_maps_off = if t < t_hi {
            let img = strip_outer(e.image_of(t, l.get(t)?)?);
            if img.intersect(m.get(t + 1)?)?.is_empty() {
                Verdict::Holds
            } else {
                Verdict::Fails
            }
        } else {
            Verdict::Unchecked
        };
        axioms.push(AxiomTriple { isolating, exit_in_l, l_maps_off });
    }
    let reliable = e.reliable_range();
    let degenerate =
        (reliable.0..=reliable.1).all(|t| inv.inv.get(t).map_or(true, |s| s.is_empty()));
    Ok((axioms, degenerate))
}

/// Builds `L` as the `k`-dilated exit set inside a verified block, retrying
/// with smaller `k` when axiom (c) fails on the reliable range. `k = 0`
/// takes the exit set itself.
pub fn build_filtration_pair(
    e: &FiberedEnclosure,
    block: &FiberedSet,
    dilation_k: u32,
) -> Result<FiltrationPair> {
    let (t_lo, t_hi) = block.t_range();
    let reliable = e.reliable_range();
    let mut k = dilation_k;
    loop {
        let mut l_sets = Vec::with_capacity((t_hi - t_lo + 1) as usize);
        for t in t_lo..=t_hi {
            if t < t_hi {
                let ex = exit_set(e, block, t)?;
                l_sets.push(ex.dilate(k).intersect(block.get(t)?)?);
            } else {
                // No map leaves the window at the last fiber; its exit set
                // is unknowable and left empty (edge fiber, unchecked).
                l_sets.push(BoxSet::empty(e.grid().clone()));
            }
        }
        let l = FiberedSet::new(e.grid().clone(), t_lo, l_sets)?;
        let (axioms, degenerate) = verify_filtration_pair(e, block, &l)?;
        let ok_on_reliable = (reliable.0..=reliable.1).all(|t| {
            axioms
                .get((t - t_lo) as usize)
                .map_or(false, |a| !a.any_fail())
        });
        if ok_on_reliable {
            return Ok(FiltrationPair {
                n: block.clone(),
                l,
                axioms,
                t_lo,
                degenerate,
                dilation_k: k,
            });
        }
        if k == 0 {
            return Err(Error::NoValidL);
        }
        k -= 1;
    }
}

/// Adapter exposing an enclosure restricted to a pair as a layered system.
pub struct EnclosureSystem<'a> {
    pub e: &'a FiberedEnclosure,
}

impl LayeredSystem for EnclosureSystem<'_> {
    fn t_range(&self) -> (i64, i64) {
        self.e.t_set_range()
    }

    fn step(&self, t: i64, node: u32) -> (Vec<u32>, bool) {
        match self.e.forward(t, BoxId(node)) {
            Ok((targets, outer)) => (targets.to_vec(), outer),
            Err(_) => (Vec::new(), false),
        }
    }

    fn interior_within(&self, _t: i64, set: &[u32]) -> Vec<u32> {
        let bs = BoxSet::from_ids(
            self.e.grid().clone(),
            set.iter().map(|&x| BoxId(x)).collect(),
        );
        bs.interior().members().iter().map(|b| b.0).collect()
    }
}

/// A pair's quotient graph together with the per-fiber collar report.
#[derive(Debug, Clone)]
pub struct PointedMapResult {
    pub graph: PointedGraph,
    /// Whether every node one layer around `L` maps only to the base point.
    /// The quotient map's continuity at the base point holds in the limit;
    /// at a fixed resolution the one-layer collar can be thicker than the
    /// neighborhood the pair provides, so this is reported, not required.
    /// Certificates do not depend on it: graph paths outer-shadow every
    /// trajectory of the enclosure by construction.
    pub collar: FiberedVerdicts,
}

/// Builds the quotient graph of a verified pair and checks the collar
/// property: nodes one layer around `L` map only to the base point.
pub fn pointed_map(e: &FiberedEnclosure, p: &FiltrationPair) -> Result<PointedMapResult> {
    let (t_lo, t_hi) = p.n.t_range();
    let m = p.n.difference(&p.l)?;
    let node_sets: Vec<Vec<u32>> = (t_lo..=t_hi)
        .map(|t| Ok(m.get(t)?.members().iter().map(|b| b.0).collect()))
        .collect::<Result<_>>()?;
    let l_sets: Vec<Vec<u32>> = (t_lo..=t_hi)
        .map(|t| Ok(p.l.get(t)?.members().iter().map(|b| b.0).collect()))
        .collect::<Result<_>>()?;
    let sys = EnclosureSystem { e };
    let g = quotient_graph(&sys, t_lo, &node_sets, &l_sets)?;
    let mut verdicts = Vec::with_capacity((t_hi - t_lo + 1) as usize);
    for t in t_lo..=t_hi {
        if t == t_hi {
            verdicts.push(Verdict::Unchecked);
            continue;
        }
        let collar = p.l.get(t)?.dilate(1).intersect(m.get(t)?)?;
        let mut ok = true;
        for &b in collar.members() {
            if let Some((targets, _)) = g.edges(t, b.0) {
                if !targets.is_empty() {
                    ok = false;
                    break;
                }
            }
        }
        verdicts.push(if ok { Verdict::Holds } else { Verdict::Fails });
    }
    Ok(PointedMapResult { graph: g, collar: FiberedVerdicts { t_lo, verdicts } })
}

/// Certificate verdicts for the index of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertVerdict {
    /// Some power of the pointed map is combinatorially the constant
    /// base-point map: sound certificate of a trivial index.
    TrivialCertified,
    NoCertificate,
    /// No certificate, and the truncated invariant set is nonempty on the
    /// reliable range. Consistent with a nontrivial index but NOT a
    /// certificate of nontriviality.
    NonemptyInvariantEvidence,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexCertificate {
    pub verdict: CertVerdict,
    pub absorption_horizon: Option<usize>,
    /// Per reliable fiber: max absorption time over nodes, when finite.
    pub per_fiber_horizon: Vec<(i64, Option<usize>)>,
}

/// Searches for the least `n` such that every length-`n` path from every
/// node on the reliable range ends at the base point.
pub fn index_certificate(
    g: &PointedGraph,
    reliable: (i64, i64),
    nonempty_invariant: bool,
) -> IndexCertificate {
    let mut per_fiber = Vec::new();
    let mut horizon: Option<usize> = Some(0);
    for t in reliable.0..=reliable.1 {
        let nodes = g.nodes(t).map(|n| n.to_vec()).unwrap_or_default();
        let h = g.absorption_time(t, &nodes);
        per_fiber.push((t, h));
        horizon = match (horizon, h) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
    }
    let verdict = match horizon {
        Some(_) => CertVerdict::TrivialCertified,
        None => {
            if nonempty_invariant {
                CertVerdict::NonemptyInvariantEvidence
            } else {
                CertVerdict::NoCertificate
            }
        }
    };
    IndexCertificate { verdict, absorption_horizon: horizon, per_fiber_horizon: per_fiber }
}

/// Per-fiber random-metric sample between two families over `N`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSample {
    pub t: i64,
    pub forward_term: f64,
    /// Absent when a closed-form inverse is unavailable for either family.
    pub inverse_term: Option<f64>,
}

/// Empirical random metric: max forward discrepancy over sampled points of
/// `N_{t-1}` plus max inverse discrepancy over sampled points of `N_{t+1}`.
pub fn random_metric(
    f: &MapFamily,
    g: &MapFamily,
    n: &FiberedSet,
    path: &NoisePath,
    samples: usize,
    strict: bool,
) -> Result<Vec<MetricSample>> {
    let grid = n.grid().clone();
    let (t_lo, t_hi) = n.t_range();
    let have_inverse = f.has_inverse() && g.has_inverse();
    if strict && !have_inverse {
        return Err(Error::InverseUnavailable);
    }
    let mut out = Vec::new();
    for t in t_lo + 1..t_hi {
        let mut fwd: f64 = 0.0;
        let prev = n.get(t - 1)?;
        let xi_prev = path.value(t - 1)?;
        for (i, &b) in prev.members().iter().enumerate() {
            if samples > 0 && prev.len() > samples && i % (prev.len() / samples).max(1) != 0 {
                continue;
            }
            let p = grid.box_center(b);
            let fa = f.eval(xi_prev, &p);
            let fb = g.eval(xi_prev, &p);
            let d: f64 =
                fa.iter().zip(&fb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            fwd = fwd.max(d);
        }
        let inverse_term = if have_inverse && t + 1 <= t_hi {
            let next = n.get(t + 1)?;
            let xi_t = path.value(t)?;
            let mut inv: f64 = 0.0;
            for (i, &b) in next.members().iter().enumerate() {
                if samples > 0 && next.len() > samples && i % (next.len() / samples).max(1) != 0 {
                    continue;
                }
                let p = grid.box_center(b);
                let ia = f.eval_inverse(xi_t, &p)?;
                let ib = g.eval_inverse(xi_t, &p)?;
                let d: f64 =
                    ia.iter().zip(&ib).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                inv = inv.max(d);
            }
            Some(inv)
        } else {
            None
        };
        out.push(MetricSample { t, forward_term: fwd, inverse_term });
    }
    Ok(out)
}

/// Outcome of re-verifying a pair for a perturbed family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub metric: Vec<MetricSample>,
    pub axioms_hold: bool,
    pub first_failed_fiber: Option<i64>,
}

/// Rebuilds the enclosure for `g` on the same grid and path, then re-checks
/// the pair's axioms.
pub fn robustness_check(
    e_f: &FiberedEnclosure,
    p: &FiltrationPair,
    g: &MapFamily,
) -> Result<RobustnessReport> {
    let e_g = build_enclosure(g, e_f.grid(), e_f.path())?;
    let (axioms, _) = verify_filtration_pair(&e_g, &p.n, &p.l)?;
    let reliable = e_f.reliable_range();
    let mut axioms_hold = true;
    let mut first_failed = None;
    for t in reliable.0..=reliable.1 {
        let a = &axioms[(t - p.t_lo) as usize];
        if a.any_fail() {
            axioms_hold = false;
            first_failed = Some(t);
            break;
        }
    }
    let metric = random_metric(e_f.family(), g, &p.n, e_f.path(), 64, false)?;
    Ok(RobustnessReport { metric, axioms_hold, first_failed_fiber: first_failed })
}
