//! Fibered combinatorial multivalued maps outer-enclosing a random map along
//! a sampled noise path, plus the exact combinatorial adjoint and iterated
//! images. This is the computational surrogate of the cocycle: the table at
//! fiber `t` encloses the step from fiber `t` to `t+1` driven by the noise
//! value at `t`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::boxset::{BoxId, BoxSet, Cell, Grid, Point};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::noise::NoisePath;

/// A scalar parameter affine in the noise: `value(xi, lambda) = base +
/// lambda * dot(noise, xi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coef {
    pub base: f64,
    #[serde(default)]
    pub noise: Vec<f64>,
}

impl Coef {
    pub fn constant(base: f64) -> Self {
        Coef { base, noise: Vec::new() }
    }

    pub fn with_noise(base: f64, noise: Vec<f64>) -> Self {
        Coef { base, noise }
    }

    pub fn value(&self, xi: &[f64], lambda: f64) -> f64 {
        let dot: f64 = self.noise.iter().zip(xi).map(|(a, b)| a * b).sum();
        self.base + lambda * dot
    }

    fn interval(&self, xi: &[f64], lambda: f64) -> Interval {
        let mut acc = Interval::point(self.base);
        for (a, x) in self.noise.iter().zip(xi) {
            acc = acc.add(Interval::point(lambda).mul(Interval::point(*a)).mul(Interval::point(*x)));
        }
        acc
    }
}

/// One monomial of a polynomial component: `coef * prod_i x_i^powers[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: Coef,
    pub powers: Vec<u32>,
}

/// Vector fields for time-h maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldSpec {
    /// Decoupled linear field `dx_i/dt = rate_i * x_i`.
    LinearDiag { rates: Vec<Coef> },
    /// The Lorenz field; `reduced` restricts to the invariant plane `y = 0`,
    /// giving the two-dimensional system in `(x, z)`.
    Lorenz { sigma: Coef, rho: Coef, beta: Coef, reduced: bool },
}

impl FieldSpec {
    pub fn dims(&self) -> usize {
        match self {
            FieldSpec::LinearDiag { rates } => rates.len(),
            FieldSpec::Lorenz { reduced, .. } => {
                if *reduced {
                    2
                } else {
                    3
                }
            }
        }
    }

    fn eval_iv(&self, xi: &[f64], lambda: f64, x: &[Interval]) -> Vec<Interval> {
        match self {
            FieldSpec::LinearDiag { rates } => rates
                .iter()
                .zip(x)
                .map(|(r, xi_v)| r.interval(xi, lambda).mul(*xi_v))
                .collect(),
            FieldSpec::Lorenz { sigma, rho, beta, reduced } => {
                let s = sigma.interval(xi, lambda);
                let b = beta.interval(xi, lambda);
                if *reduced {
                    // y = 0 plane: dx = -sigma x, dz = -beta z
                    vec![s.neg().mul(x[0]), b.neg().mul(x[1])]
                } else {
                    let r = rho.interval(xi, lambda);
                    let dx = s.mul(x[1].sub(x[0]));
                    let dy = r.mul(x[0]).sub(x[1]).sub(x[0].mul(x[2]));
                    let dz = x[0].mul(x[1]).sub(b.mul(x[2]));
                    vec![dx, dy, dz]
                }
            }
        }
    }

}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    Euler,
    Rk4,
}

/// The shape of one time step of the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MapKind {
    /// `x_i -> d_i(xi, lambda) * x_i`.
    RandomDiagonal { diag: Vec<Coef> },
    /// Euler step of the logistic equation:
    /// `x -> x + h * r(xi, lambda) * x * (1 - x/k)`.
    RandomLogistic { r: Coef, k: f64, h: f64 },
    /// Euler step of the Lorenz system (optionally reduced to `y = 0`).
    RandomLorenzEuler { sigma: Coef, rho: Coef, beta: Coef, h: f64, reduced: bool },
    /// `x -> A(xi, lambda) x + c(xi, lambda)`.
    Affine { linear: Vec<Vec<Coef>>, translate: Vec<Coef> },
    /// Componentwise multivariate polynomials with noise-affine coefficients.
    Polynomial { dims: usize, components: Vec<Vec<Monomial>> },
    /// Fixed-step integrator over a vector field; the map of record for
    /// flow-derived systems. Not a validated integration scheme.
    TimeH { field: FieldSpec, h: f64, method: Integrator, substeps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnclosureMethod {
    /// Interval-arithmetic evaluation over each box (sound by construction).
    Interval,
    /// Image of the box center dilated by a Lipschitz-derived layer count.
    LipschitzSample,
}

/// A (possibly noise- and lambda-dependent) family of self maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFamily {
    #[serde(flatten)]
    pub kind: MapKind,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Constant offset added to the image; sup-norm `C^0` perturbations
    /// enter here.
    #[serde(default)]
    pub offset: Vec<f64>,
    #[serde(default)]
    pub lipschitz_bound: Option<f64>,
    #[serde(default = "default_method")]
    pub method: EnclosureMethod,
}

fn default_lambda() -> f64 {
    1.0
}

fn default_method() -> EnclosureMethod {
    EnclosureMethod::Interval
}

impl MapFamily {
    pub fn new(kind: MapKind) -> Self {
        MapFamily {
            kind,
            lambda: 1.0,
            offset: Vec::new(),
            lipschitz_bound: None,
            method: EnclosureMethod::Interval,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_offset(mut self, offset: Vec<f64>) -> Self {
        self.offset = offset;
        self
    }

    pub fn with_method(mut self, method: EnclosureMethod, lipschitz_bound: Option<f64>) -> Self {
        self.method = method;
        self.lipschitz_bound = lipschitz_bound;
        self
    }

    pub fn dims(&self) -> usize {
        match &self.kind {
            MapKind::RandomDiagonal { diag } => diag.len(),
            MapKind::RandomLogistic { .. } => 1,
            MapKind::RandomLorenzEuler { reduced, .. } => {
                if *reduced {
                    2
                } else {
                    3
                }
            }
            MapKind::Affine { linear, .. } => linear.len(),
            MapKind::Polynomial { dims, .. } => *dims,
            MapKind::TimeH { field, .. } => field.dims(),
        }
    }

    fn offset_at(&self, i: usize) -> f64 {
        self.offset.get(i).copied().unwrap_or(0.0)
    }

    /// Interval image of an interval box under one step with noise `xi`.
    pub fn eval_interval(&self, xi: &[f64], x: &[Interval]) -> Vec<Interval> {
        let l = self.lambda;
        let mut out = match &self.kind {
            MapKind::RandomDiagonal { diag } => diag
                .iter()
                .zip(x)
                .map(|(c, xv)| c.interval(xi, l).mul(*xv))
                .collect::<Vec<_>>(),
            MapKind::RandomLogistic { r, k, h } => {
                let rv = r.interval(xi, l);
                let xv = x[0];
                let inner = Interval::point(1.0).sub(xv.mul(Interval::recip_scalar(*k)));
                vec![xv.add(Interval::point(*h).mul(rv).mul(xv).mul(inner))]
            }
            MapKind::RandomLorenzEuler { sigma, rho, beta, h, reduced } => {
                let field = FieldSpec::Lorenz {
                    sigma: sigma.clone(),
                    rho: rho.clone(),
                    beta: beta.clone(),
                    reduced: *reduced,
                };
                let f = field.eval_iv(xi, l, x);
                x.iter().zip(f).map(|(xv, fv)| xv.add(fv.scale(*h))).collect()
            }
            MapKind::Affine { linear, translate } => linear
                .iter()
                .zip(translate)
                .map(|(row, tr)| {
                    let mut acc = tr.interval(xi, l);
                    for (c, xv) in row.iter().zip(x) {
                        acc = acc.add(c.interval(xi, l).mul(*xv));
                    }
                    acc
                })
                .collect(),
            MapKind::Polynomial { components, .. } => components
                .iter()
                .map(|monos| {
                    let mut acc = Interval::point(0.0);
                    for m in monos {
                        let mut term = m.coef.interval(xi, l);
                        for (p, xv) in m.powers.iter().zip(x) {
                            term = term.mul(xv.powi(*p));
                        }
                        acc = acc.add(term);
                    }
                    acc
                })
                .collect(),
            MapKind::TimeH { field, h, method, substeps } => {
                let n = (*substeps).max(1);
                let dt = h / n as f64;
                let mut cur = x.to_vec();
                for _ in 0..n {
                    cur = match method {
                        Integrator::Euler => {
                            let f = field.eval_iv(xi, l, &cur);
                            cur.iter().zip(f).map(|(xv, fv)| xv.add(fv.scale(dt))).collect()
                        }
                        Integrator::Rk4 => rk4_step_iv(field, xi, l, &cur, dt),
                    };
                }
                cur
            }
        };
        for (i, v) in out.iter_mut().enumerate() {
            *v = v.add(Interval::point(self.offset_at(i)));
        }
        out
    }

    /// Pointwise image (midpoint arithmetic; used for sampling and the
    /// Lipschitz enclosure).
    pub fn eval(&self, xi: &[f64], x: &[f64]) -> Vec<f64> {
        let iv: Vec<Interval> = x.iter().map(|&v| Interval::point(v)).collect();
        self.eval_interval(xi, &iv).iter().map(|v| v.midpoint()).collect()
    }

    /// Closed-form inverse where available (diagonal and affine kinds).
    pub fn eval_inverse(&self, xi: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let l = self.lambda;
        let adj: Vec<f64> = (0..self.dims()).map(|i| y[i] - self.offset_at(i)).collect();
        match &self.kind {
            MapKind::RandomDiagonal { diag } => {
                let mut out = Vec::with_capacity(diag.len());
                for (i, c) in diag.iter().enumerate() {
                    let d = c.value(xi, l);
                    if d == 0.0 {
                        return Err(Error::InverseUnavailable);
                    }
                    out.push(adj[i] / d);
                }
                Ok(out)
            }
            MapKind::Affine { linear, translate } => {
                let n = linear.len();
                let mut a: Vec<Vec<f64>> = linear
                    .iter()
                    .map(|row| row.iter().map(|c| c.value(xi, l)).collect())
                    .collect();
                let mut b: Vec<f64> =
                    (0..n).map(|i| adj[i] - translate[i].value(xi, l)).collect();
                // Gaussian elimination with partial pivoting.
                for col in 0..n {
                    let piv = (col..n)
                        .max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap())
                        .unwrap();
                    if a[piv][col].abs() < 1e-14 {
                        return Err(Error::InverseUnavailable);
                    }
                    a.swap(col, piv);
                    b.swap(col, piv);
                    for row in col + 1..n {
                        let f = a[row][col] / a[col][col];
                        for k in col..n {
                            a[row][k] -= f * a[col][k];
                        }
                        b[row] -= f * b[col];
                    }
                }
                let mut x = vec![0.0; n];
                for row in (0..n).rev() {
                    let mut acc = b[row];
                    for k in row + 1..n {
                        acc -= a[row][k] * x[k];
                    }
                    x[row] = acc / a[row][row];
                }
                Ok(x)
            }
            _ => Err(Error::InverseUnavailable),
        }
    }

    pub fn has_inverse(&self) -> bool {
        matches!(self.kind, MapKind::RandomDiagonal { .. } | MapKind::Affine { .. })
    }

    pub fn validate(&self, noise_dims: usize) -> Result<()> {
        let coef_dims_ok = |c: &Coef| c.noise.is_empty() || c.noise.len() <= noise_dims;
        let ok = match &self.kind {
            MapKind::RandomDiagonal { diag } => diag.iter().all(coef_dims_ok),
            MapKind::RandomLogistic { r, k, h } => {
                coef_dims_ok(r) && *k > 0.0 && *h > 0.0
            }
            MapKind::RandomLorenzEuler { sigma, rho, beta, h, .. } => {
                coef_dims_ok(sigma) && coef_dims_ok(rho) && coef_dims_ok(beta) && *h > 0.0
            }
            MapKind::Affine { linear, translate } => {
                let n = linear.len();
                linear.iter().all(|row| row.len() == n && row.iter().all(coef_dims_ok))
                    && translate.len() == n
                    && translate.iter().all(coef_dims_ok)
            }
            MapKind::Polynomial { dims, components } => {
                components.len() == *dims
                    && components.iter().all(|ms| {
                        ms.iter().all(|m| m.powers.len() == *dims && coef_dims_ok(&m.coef))
                    })
                    && components
                        .iter()
                        .any(|ms| ms.iter().any(|m| m.powers.iter().sum::<u32>() >= 1))
            }
            MapKind::TimeH { h, substeps, .. } => *h > 0.0 && *substeps >= 1,
        };
        if !ok {
            return Err(Error::Config("map family inconsistent with noise dims".into()));
        }
        if self.method == EnclosureMethod::LipschitzSample && self.lipschitz_bound.is_none() {
            return Err(Error::MissingLipschitzBound);
        }
        Ok(())
    }
}

fn rk4_step_iv(field: &FieldSpec, xi: &[f64], l: f64, x: &[Interval], dt: f64) -> Vec<Interval> {
    let add_scaled = |a: &[Interval], b: &[Interval], s: f64| -> Vec<Interval> {
        a.iter().zip(b).map(|(av, bv)| av.add(bv.scale(s))).collect()
    };
    let k1 = field.eval_iv(xi, l, x);
    let k2 = field.eval_iv(xi, l, &add_scaled(x, &k1, dt / 2.0));
    let k3 = field.eval_iv(xi, l, &add_scaled(x, &k2, dt / 2.0));
    let k4 = field.eval_iv(xi, l, &add_scaled(x, &k3, dt));
    (0..x.len())
        .map(|i| {
            let sum = k1[i]
                .add(k2[i].scale(2.0))
                .add(k3[i].scale(2.0))
                .add(k4[i]);
            x[i].add(sum.scale(dt / 6.0))
        })
        .collect()
}

/// A family of box sets indexed by fiber `t in {t_lo, ..., t_lo + len - 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberedSet {
    grid: Arc<Grid>,
    t_lo: i64,
    sets: Vec<BoxSet>,
}

impl FiberedSet {
    pub fn new(grid: Arc<Grid>, t_lo: i64, sets: Vec<BoxSet>) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::Config("fibered set needs at least one fiber".into()));
        }
        if sets.iter().any(|s| s.grid() != &grid) {
            return Err(Error::GridMismatch);
        }
        Ok(FiberedSet { grid, t_lo, sets })
    }

    /// The same box set on every fiber of the window `[-T, T]`.
    pub fn uniform(half_window: usize, set: BoxSet) -> Self {
        let t_lo = -(half_window as i64);
        let grid = set.grid().clone();
        let sets = vec![set; 2 * half_window + 1];
        FiberedSet { grid, t_lo, sets }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn t_range(&self) -> (i64, i64) {
        (self.t_lo, self.t_lo + self.sets.len() as i64 - 1)
    }

    pub fn get(&self, t: i64) -> Result<&BoxSet> {
        let (lo, hi) = self.t_range();
        if t < lo || t > hi {
            return Err(Error::FiberOutOfWindow { t, lo, hi });
        }
        Ok(&self.sets[(t - lo) as usize])
    }

    pub fn map_fibers(&self, f: impl Fn(i64, &BoxSet) -> BoxSet) -> FiberedSet {
        let sets: Vec<BoxSet> = self
            .sets
            .iter()
            .enumerate()
            .map(|(i, s)| f(self.t_lo + i as i64, s))
            .collect();
        FiberedSet { grid: self.grid.clone(), t_lo: self.t_lo, sets }
    }

    pub fn zip_fibers(
        &self,
        other: &FiberedSet,
        f: impl Fn(&BoxSet, &BoxSet) -> Result<BoxSet>,
    ) -> Result<FiberedSet> {
        if self.t_range() != other.t_range() || self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let sets: Vec<BoxSet> = self
            .sets
            .iter()
            .zip(&other.sets)
            .map(|(a, b)| f(a, b))
            .collect::<Result<_>>()?;
        Ok(FiberedSet { grid: self.grid.clone(), t_lo: self.t_lo, sets })
    }

    pub fn difference(&self, other: &FiberedSet) -> Result<FiberedSet> {
        self.zip_fibers(other, |a, b| a.difference(b))
    }

    pub fn union(&self, other: &FiberedSet) -> Result<FiberedSet> {
        self.zip_fibers(other, |a, b| a.union(b))
    }

    pub fn intersect(&self, other: &FiberedSet) -> Result<FiberedSet> {
        self.zip_fibers(other, |a, b| a.intersect(b))
    }

    pub fn is_empty(&self) -> bool {
        self.sets.iter().all(|s| s.is_empty())
    }
}

/// Per-box image table for one fiber.
#[derive(Debug, Clone)]
struct FiberTable {
    /// Sorted target ids on the next fiber, indexed by source box id.
    images: Vec<Vec<u32>>,
    /// Whether the enclosed image meets the outer cell.
    hits_outer: Vec<bool>,
}

/// The per-fiber outer enclosure of the one-step maps along a path.
///
/// The outer cell is absorbing: once a trajectory is enclosed as possibly
/// outside the domain, no further claims are made about it.
#[derive(Debug, Clone)]
pub struct FiberedEnclosure {
    grid: Arc<Grid>,
    path: NoisePath,
    family: MapFamily,
    tables: Vec<FiberTable>,
}

impl FiberedEnclosure {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn path(&self) -> &NoisePath {
        &self.path
    }

    pub fn family(&self) -> &MapFamily {
        &self.family
    }

    pub fn half_window(&self) -> usize {
        self.path.half_window
    }

    /// Map fibers: steps exist for `t in [-T, T-1]`.
    pub fn t_map_range(&self) -> (i64, i64) {
        self.path.t_range()
    }

    /// Set fibers: `[-T, T]`.
    pub fn t_set_range(&self) -> (i64, i64) {
        let (lo, hi) = self.path.t_range();
        (lo, hi + 1)
    }

    /// Interior fiber interval on which both forward and backward depth is
    /// at least `T/2`; truncated invariant sets are trustworthy there.
    pub fn reliable_range(&self) -> (i64, i64) {
        let half = (self.path.half_window / 2) as i64;
        (-half, half)
    }

    pub fn forward(&self, t: i64, b: BoxId) -> Result<(&[u32], bool)> {
        let (lo, hi) = self.t_map_range();
        if t < lo || t > hi {
            return Err(Error::FiberOutOfWindow { t, lo, hi });
        }
        let table = &self.tables[(t - lo) as usize];
        Ok((&table.images[b.0 as usize], table.hits_outer[b.0 as usize]))
    }

    /// One-step image of a box set. Outer is absorbing.
    pub fn image_of(&self, t: i64, set: &BoxSet) -> Result<BoxSet> {
        let mut ids: Vec<u32> = Vec::new();
        let mut outer = set.contains_outer();
        for &b in set.members() {
            let (targets, hit) = self.forward(t, b)?;
            ids.extend_from_slice(targets);
            outer |= hit;
        }
        ids.sort_unstable();
        ids.dedup();
        Ok(BoxSet::from_ids(self.grid.clone(), ids.into_iter().map(BoxId).collect())
            .with_outer(outer))
    }

    /// Exact combinatorial adjoint: boxes on fiber `t` whose forward image
    /// meets `target` (on fiber `t+1`). The outer-to-outer edge is honored
    /// through the `contains_outer` flags.
    pub fn preimage(&self, t: i64, target: &BoxSet) -> Result<BoxSet> {
        let (lo, hi) = self.t_map_range();
        if t < lo || t > hi {
            return Err(Error::FiberOutOfWindow { t, lo, hi });
        }
        let table = &self.tables[(t - lo) as usize];
        let mut ids = Vec::new();
        for raw in 0..self.grid.total_boxes() as u32 {
            let touches = table.images[raw as usize]
                .iter()
                .any(|&tgt| target.contains(BoxId(tgt)))
                || (target.contains_outer() && table.hits_outer[raw as usize]);
            if touches {
                ids.push(BoxId(raw));
            }
        }
        Ok(BoxSet::from_ids(self.grid.clone(), ids).with_outer(target.contains_outer()))
    }

    /// `k`-fold composition of forward maps applied to `d` at fiber `t0`,
    /// landing on fiber `t0 + k`. Negative `k` iterates the adjoint.
    pub fn iterate_image(&self, d: &FiberedSet, t0: i64, k: i64) -> Result<BoxSet> {
        let (slo, shi) = self.t_set_range();
        let t1 = t0 + k;
        if t0 < slo || t0 > shi || t1 < slo || t1 > shi {
            return Err(Error::WindowExhausted { k, half_window: self.path.half_window });
        }
        let mut cur = d.get(t0)?.clone();
        if k >= 0 {
            for i in 0..k {
                cur = self.image_of(t0 + i, &cur)?;
            }
        } else {
            for i in 0..(-k) {
                cur = self.preimage(t0 - i - 1, &cur)?;
            }
        }
        Ok(cur)
    }
}

/// Builds the per-fiber outer enclosure of `family` along `path`.
pub fn build_enclosure(
    family: &MapFamily,
    grid: &Arc<Grid>,
    path: &NoisePath,
) -> Result<FiberedEnclosure> {
    family.validate(path.model.dims())?;
    if family.dims() != grid.dims() {
        return Err(Error::DimensionMismatch { expected: grid.dims(), got: family.dims() });
    }
    let (t_lo, t_hi) = path.t_range();
    let mut tables = Vec::with_capacity((t_hi - t_lo + 1) as usize);
    for t in t_lo..=t_hi {
        let xi = path.value(t)?;
        if !path.model.support_contains(xi) {
            return Err(Error::NoiseOutsideSupport { t });
        }
        tables.push(build_fiber_table(family, grid, xi, t)?);
    }
    Ok(FiberedEnclosure {
        grid: grid.clone(),
        path: path.clone(),
        family: family.clone(),
        tables,
    })
}

fn build_fiber_table(
    family: &MapFamily,
    grid: &Arc<Grid>,
    xi: &[f64],
    t: i64,
) -> Result<FiberTable> {
    let total = grid.total_boxes() as usize;
    let mut images = vec![Vec::new(); total];
    let mut hits_outer = vec![false; total];
    let d = grid.dims();
    for raw in 0..total as u32 {
        let id = BoxId(raw);
        let (region_lo, region_hi, outer) = match family.method {
            EnclosureMethod::Interval => {
                let (blo, bhi) = grid.box_bounds(id);
                let ivs: Vec<Interval> =
                    (0..d).map(|i| Interval::new(blo[i], bhi[i])).collect();
                let img = family.eval_interval(xi, &ivs);
                if img.iter().any(|v| !v.lo.is_finite() || !v.hi.is_finite()) {
                    return Err(Error::IntegratorRejected { t });
                }
                let lo: Vec<f64> = img.iter().map(|v| v.lo).collect();
                let hi: Vec<f64> = img.iter().map(|v| v.hi).collect();
                (lo, hi, false)
            }
            EnclosureMethod::LipschitzSample => {
                let lip = family.lipschitz_bound.ok_or(Error::MissingLipschitzBound)?;
                let center = grid.box_center(id);
                let img = family.eval(xi, &center);
                if img.iter().any(|v| !v.is_finite()) {
                    return Err(Error::IntegratorRejected { t });
                }
                let r = grid.box_half_diagonal();
                let w = grid.min_box_width();
                let layers = ((lip * r / w).ceil() as f64 + 1.0) * w;
                let lo: Vec<f64> = img.iter().map(|v| v - layers).collect();
                let hi: Vec<f64> = img.iter().map(|v| v + layers).collect();
                (lo, hi, false)
            }
        };
        let mut outer = outer;
        let mut ranges: Vec<(u32, u32)> = Vec::with_capacity(d);
        let mut empty = false;
        for i in 0..d {
            if region_hi[i] < grid.lo()[i] || region_lo[i] > grid.hi()[i] {
                empty = true;
                outer = true;
                break;
            }
            if region_lo[i] < grid.lo()[i] || region_hi[i] > grid.hi()[i] {
                outer = true;
            }
            let a = grid.axis_cell(i, region_lo[i].max(grid.lo()[i])).unwrap();
            let b = grid.axis_cell(i, region_hi[i].min(grid.hi()[i])).unwrap();
            ranges.push((a, b));
        }
        if !empty {
            let mut idx: Vec<u32> = ranges.iter().map(|r| r.0).collect();
            let mut targets = Vec::new();
            'product: loop {
                targets.push(grid.id_from_multi(&idx).0);
                // odometer over the per-axis index ranges
                let mut axis = d;
                loop {
                    if axis == 0 {
                        break 'product;
                    }
                    axis -= 1;
                    if idx[axis] < ranges[axis].1 {
                        idx[axis] += 1;
                        for i in axis + 1..d {
                            idx[i] = ranges[i].0;
                        }
                        break;
                    }
                    idx[axis] = ranges[axis].0;
                }
            }
            targets.sort_unstable();
            images[raw as usize] = targets;
        }
        hits_outer[raw as usize] = outer;
    }
    let _ = t;
    Ok(FiberTable { images, hits_outer })
}

/// Sample a deterministic point inside a box (for soundness spot checks).
pub fn point_in_box(grid: &Grid, id: BoxId, u: &[f64]) -> Point {
    let (lo, hi) = grid.box_bounds(id);
    let coords: Vec<f64> =
        (0..grid.dims()).map(|i| lo[i] + u[i].clamp(0.0, 1.0 - 1e-12) * (hi[i] - lo[i])).collect();
    Point { coords }
}

/// Locate the image of a concrete point (soundness oracle helper).
pub fn locate_image(
    family: &MapFamily,
    grid: &Grid,
    xi: &[f64],
    p: &Point,
) -> Result<Cell> {
    let img = family.eval(xi, &p.coords);
    grid.locate(&Point { coords: img })
}
