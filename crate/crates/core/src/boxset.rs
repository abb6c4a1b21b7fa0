//! Grid geometry and box-set algebra.
//!
//! A [`Grid`] discretizes a rectangular phase-space domain into axis-aligned
//! boxes. A [`BoxSet`] is a finite union of closed boxes plus an optional
//! membership flag for the distinguished "outside the domain" cell, and forms
//! a Boolean algebra over the universe (domain boxes) ∪ {outer}.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of one grid box (row-major linear index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BoxId(pub u32);

/// Result of locating a point: either a grid box or the outer cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Box(BoxId),
    Outer,
}

/// A point of the phase space with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGrid("point has non-finite coordinate".into()));
        }
        Ok(Point { coords })
    }
}

/// Rectangular discretization of a compact domain.
///
/// `box_width` is computed once at construction and stored; all cell bounds
/// derive from it, never re-derived from `hi`, so there is no drift between
/// point location and box-bound queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    subdivisions: Vec<u32>,
    box_width: Vec<f64>,
    #[serde(skip)]
    strides: Vec<u64>,
    #[serde(skip)]
    total: u64,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, subdivisions: Vec<u32>) -> Result<Arc<Grid>> {
        let dims = lo.len();
        if hi.len() != dims || subdivisions.len() != dims || dims == 0 {
            return Err(Error::InvalidGrid("lo/hi/subdivisions length mismatch".into()));
        }
        for i in 0..dims {
            if !(lo[i] < hi[i]) || !lo[i].is_finite() || !hi[i].is_finite() {
                return Err(Error::InvalidGrid(format!("axis {i}: need lo < hi, finite")));
            }
            if subdivisions[i] < 2 {
                return Err(Error::InvalidGrid(format!("axis {i}: need >= 2 subdivisions")));
            }
        }
        let box_width: Vec<f64> = (0..dims)
            .map(|i| (hi[i] - lo[i]) / subdivisions[i] as f64)
            .collect();
        let mut strides = vec![0u64; dims];
        let mut total: u64 = 1;
        for i in (0..dims).rev() {
            strides[i] = total;
            total = total
                .checked_mul(subdivisions[i] as u64)
                .ok_or_else(|| Error::InvalidGrid("grid too large".into()))?;
        }
        if total > u32::MAX as u64 {
            return Err(Error::InvalidGrid("grid exceeds u32 box indices".into()));
        }
        Ok(Arc::new(Grid { dims, lo, hi, subdivisions, box_width, strides, total }))
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn subdivisions(&self) -> &[u32] {
        &self.subdivisions
    }

    pub fn box_width(&self) -> &[f64] {
        &self.box_width
    }

    pub fn min_box_width(&self) -> f64 {
        self.box_width.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn total_boxes(&self) -> u64 {
        self.total
    }

    /// Half-diagonal of one box (Euclidean).
    pub fn box_half_diagonal(&self) -> f64 {
        self.box_width.iter().map(|w| 0.25 * w * w).sum::<f64>().sqrt()
    }

    pub fn multi_index(&self, id: BoxId) -> Vec<u32> {
        let mut rem = id.0 as u64;
        let mut idx = vec![0u32; self.dims];
        for i in 0..self.dims {
            idx[i] = (rem / self.strides[i]) as u32;
            rem %= self.strides[i];
        }
        idx
    }

    pub fn id_from_multi(&self, idx: &[u32]) -> BoxId {
        let mut lin: u64 = 0;
        for i in 0..self.dims {
            debug_assert!(idx[i] < self.subdivisions[i]);
            lin += idx[i] as u64 * self.strides[i];
        }
        BoxId(lin as u32)
    }

    /// Per-axis cell index of a coordinate, or `None` when it leaves the
    /// domain. Cells are half-open `[lo + i*w, lo + (i+1)*w)`; a coordinate
    /// exactly on the upper domain face belongs to the last cell.
    pub fn axis_cell(&self, axis: usize, x: f64) -> Option<u32> {
        if x < self.lo[axis] || x > self.hi[axis] || !x.is_finite() {
            return None;
        }
        if x == self.hi[axis] {
            return Some(self.subdivisions[axis] - 1);
        }
        let raw = ((x - self.lo[axis]) / self.box_width[axis]).floor();
        let mut i = raw as i64;
        // Guard against rounding placing x outside its true half-open cell.
        while i > 0 && x < self.lo[axis] + i as f64 * self.box_width[axis] {
            i -= 1;
        }
        while (i as u32) + 1 < self.subdivisions[axis]
            && x >= self.lo[axis] + (i + 1) as f64 * self.box_width[axis]
        {
            i += 1;
        }
        Some((i.max(0) as u32).min(self.subdivisions[axis] - 1))
    }

    /// Locate a point in the grid: the unique half-open cell containing it,
    /// or the outer cell once any coordinate leaves the domain.
    pub fn locate(&self, p: &Point) -> Result<Cell> {
        if p.coords.len() != self.dims {
            return Err(Error::DimensionMismatch { expected: self.dims, got: p.coords.len() });
        }
        let mut idx = vec![0u32; self.dims];
        for i in 0..self.dims {
            match self.axis_cell(i, p.coords[i]) {
                Some(c) => idx[i] = c,
                None => return Ok(Cell::Outer),
            }
        }
        Ok(Cell::Box(self.id_from_multi(&idx)))
    }

    /// Closed bounds of a box: `(lower corner, upper corner)`.
    pub fn box_bounds(&self, id: BoxId) -> (Vec<f64>, Vec<f64>) {
        let idx = self.multi_index(id);
        let lo: Vec<f64> =
            (0..self.dims).map(|i| self.lo[i] + idx[i] as f64 * self.box_width[i]).collect();
        let hi: Vec<f64> =
            (0..self.dims).map(|i| self.lo[i] + (idx[i] + 1) as f64 * self.box_width[i]).collect();
        (lo, hi)
    }

    pub fn box_center(&self, id: BoxId) -> Vec<f64> {
        let idx = self.multi_index(id);
        (0..self.dims)
            .map(|i| self.lo[i] + (idx[i] as f64 + 0.5) * self.box_width[i])
            .collect()
    }

    pub fn on_domain_boundary(&self, id: BoxId) -> bool {
        let idx = self.multi_index(id);
        (0..self.dims).any(|i| idx[i] == 0 || idx[i] + 1 == self.subdivisions[i])
    }

    /// All Moore (vertex-including) neighbors inside the grid, excluding `id`.
    pub fn moore_neighbors(&self, id: BoxId) -> Vec<BoxId> {
        let idx = self.multi_index(id);
        let mut out = Vec::new();
        let mut offs = vec![-1i64; self.dims];
        loop {
            if offs.iter().any(|&o| o != 0) {
                let mut ok = true;
                let mut nidx = vec![0u32; self.dims];
                for i in 0..self.dims {
                    let v = idx[i] as i64 + offs[i];
                    if v < 0 || v >= self.subdivisions[i] as i64 {
                        ok = false;
                        break;
                    }
                    nidx[i] = v as u32;
                }
                if ok {
                    out.push(self.id_from_multi(&nidx));
                }
            }
            // odometer over {-1, 0, 1}^d
            let mut i = 0;
            loop {
                if i == self.dims {
                    return out;
                }
                offs[i] += 1;
                if offs[i] <= 1 {
                    break;
                }
                offs[i] = -1;
                i += 1;
            }
        }
    }

    /// Full Moore neighborhood is inside the grid (box not on the boundary).
    pub fn has_full_neighborhood(&self, id: BoxId) -> bool {
        !self.on_domain_boundary(id)
    }
}

/// A finite union of closed grid boxes, optionally containing the outer cell.
///
/// Immutable after construction; all operations return new sets.
#[derive(Debug, Clone)]
pub struct BoxSet {
    grid: Arc<Grid>,
    members: Vec<BoxId>, // sorted, deduplicated
    contains_outer: bool,
}

impl PartialEq for BoxSet {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.members == other.members
            && self.contains_outer == other.contains_outer
    }
}

impl BoxSet {
    pub fn empty(grid: Arc<Grid>) -> Self {
        BoxSet { grid, members: Vec::new(), contains_outer: false }
    }

    pub fn from_ids(grid: Arc<Grid>, mut members: Vec<BoxId>) -> Self {
        members.sort_unstable();
        members.dedup();
        debug_assert!(members.last().map_or(true, |b| (b.0 as u64) < grid.total_boxes()));
        BoxSet { grid, members, contains_outer: false }
    }

    pub fn with_outer(mut self, outer: bool) -> Self {
        self.contains_outer = outer;
        self
    }

    /// All boxes of the domain.
    pub fn full_domain(grid: Arc<Grid>) -> Self {
        let members = (0..grid.total_boxes() as u32).map(BoxId).collect();
        BoxSet { grid, members, contains_outer: false }
    }

    /// Boxes whose closed cell intersects the closed Euclidean ball.
    pub fn cover_ball(grid: Arc<Grid>, center: &[f64], radius: f64) -> Result<Self> {
        if center.len() != grid.dims() {
            return Err(Error::DimensionMismatch { expected: grid.dims(), got: center.len() });
        }
        let mut members = Vec::new();
        for raw in 0..grid.total_boxes() as u32 {
            let id = BoxId(raw);
            let (lo, hi) = grid.box_bounds(id);
            // squared distance from center to the closed box
            let mut d2 = 0.0;
            for i in 0..grid.dims() {
                let c = center[i].clamp(lo[i], hi[i]);
                d2 += (center[i] - c) * (center[i] - c);
            }
            if d2 <= radius * radius {
                members.push(id);
            }
        }
        Ok(BoxSet { grid, members, contains_outer: false })
    }

    /// Boxes whose closed cell intersects the closed axis-aligned rectangle.
    pub fn cover_rect(grid: Arc<Grid>, rect_lo: &[f64], rect_hi: &[f64]) -> Result<Self> {
        if rect_lo.len() != grid.dims() || rect_hi.len() != grid.dims() {
            return Err(Error::DimensionMismatch { expected: grid.dims(), got: rect_lo.len() });
        }
        let mut members = Vec::new();
        'boxes: for raw in 0..grid.total_boxes() as u32 {
            let id = BoxId(raw);
            let (lo, hi) = grid.box_bounds(id);
            for i in 0..grid.dims() {
                if hi[i] < rect_lo[i] || lo[i] > rect_hi[i] {
                    continue 'boxes;
                }
            }
            members.push(id);
        }
        Ok(BoxSet { grid, members, contains_outer: false })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn members(&self) -> &[BoxId] {
        &self.members
    }

    pub fn contains_outer(&self) -> bool {
        self.contains_outer
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty() && !self.contains_outer
    }

    pub fn contains(&self, id: BoxId) -> bool {
        self.members.binary_search(&id).is_ok()
    }

    fn check_grid(&self, other: &BoxSet) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn union(&self, other: &BoxSet) -> Result<BoxSet> {
        self.check_grid(other)?;
        let mut members = Vec::with_capacity(self.members.len() + other.members.len());
        let (mut i, mut j) = (0, 0);
        while i < self.members.len() || j < other.members.len() {
            let tk = match (self.members.get(i), other.members.get(j)) {
                (Some(&a), Some(&b)) => {
                    if a < b {
                        i += 1;
                        a
                    } else if b < a {
                        j += 1;
                        b
                    } else {
                        i += 1;
                        j += 1;
                        a
                    }
                }
                (Some(&a), None) => {
                    i += 1;
                    a
                }
                (None, Some(&b)) => {
                    j += 1;
                    b
                }
                (None, None) => unreachable!(),
            };
            members.push(tk);
        }
        Ok(BoxSet {
            grid: self.grid.clone(),
            members,
            contains_outer: self.contains_outer || other.contains_outer,
        })
    }

    pub fn intersect(&self, other: &BoxSet) -> Result<BoxSet> {
        self.check_grid(other)?;
        let mut members = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.members.len() && j < other.members.len() {
            if self.members[i] < other.members[j] {
                i += 1;
            } else if other.members[j] < self.members[i] {
                j += 1;
            } else {
                members.push(self.members[i]);
                i += 1;
                j += 1;
            }
        }
        Ok(BoxSet {
            grid: self.grid.clone(),
            members,
            contains_outer: self.contains_outer && other.contains_outer,
        })
    }

    pub fn difference(&self, other: &BoxSet) -> Result<BoxSet> {
        self.check_grid(other)?;
        let mut members = Vec::new();
        let mut j = 0;
        for &a in &self.members {
            while j < other.members.len() && other.members[j] < a {
                j += 1;
            }
            if j >= other.members.len() || other.members[j] != a {
                members.push(a);
            }
        }
        Ok(BoxSet {
            grid: self.grid.clone(),
            members,
            contains_outer: self.contains_outer && !other.contains_outer,
        })
    }

    /// Complement within the universe (domain boxes) ∪ {outer}.
    pub fn complement(&self) -> BoxSet {
        let mut members = Vec::with_capacity(self.grid.total_boxes() as usize - self.members.len());
        let mut j = 0;
        for raw in 0..self.grid.total_boxes() as u32 {
            if j < self.members.len() && self.members[j].0 == raw {
                j += 1;
            } else {
                members.push(BoxId(raw));
            }
        }
        BoxSet { grid: self.grid.clone(), members, contains_outer: !self.contains_outer }
    }

    pub fn is_subset_of(&self, other: &BoxSet) -> bool {
        if self.contains_outer && !other.contains_outer {
            return false;
        }
        let mut j = 0;
        for &a in &self.members {
            while j < other.members.len() && other.members[j] < a {
                j += 1;
            }
            if j >= other.members.len() || other.members[j] != a {
                return false;
            }
            j += 1;
        }
        true
    }

    /// Combinatorial interior: boxes whose full Moore neighborhood lies in
    /// the set and that touch neither the domain boundary nor the outer cell.
    pub fn interior(&self) -> BoxSet {
        let mut members = Vec::new();
        for &b in &self.members {
            if self.grid.on_domain_boundary(b) {
                continue;
            }
            if self.grid.moore_neighbors(b).iter().all(|n| self.contains(*n)) {
                members.push(b);
            }
        }
        BoxSet { grid: self.grid.clone(), members, contains_outer: false }
    }

    /// Grow by `k` Moore-adjacency layers, clipped to the domain. The outer
    /// flag is preserved but does not spread.
    pub fn dilate(&self, k: u32) -> BoxSet {
        if k == 0 || self.members.is_empty() {
            return self.clone();
        }
        let mut current: Vec<BoxId> = self.members.clone();
        let mut all: Vec<BoxId> = self.members.clone();
        for _ in 0..k {
            let mut next: Vec<BoxId> = Vec::new();
            for &b in &current {
                for n in self.grid.moore_neighbors(b) {
                    next.push(n);
                }
            }
            next.sort_unstable();
            next.dedup();
            // frontier = next \ all
            let mut frontier = Vec::new();
            let mut j = 0;
            for &n in &next {
                while j < all.len() && all[j] < n {
                    j += 1;
                }
                if j >= all.len() || all[j] != n {
                    frontier.push(n);
                }
            }
            if frontier.is_empty() {
                break;
            }
            all.extend_from_slice(&frontier);
            all.sort_unstable();
            current = frontier;
        }
        BoxSet { grid: self.grid.clone(), members: all, contains_outer: self.contains_outer }
    }

    /// Drop boxes not in `dilate(interior(B), 1)`: removes isolated "hairs"
    /// so that the set is the closure of its combinatorial interior.
    pub fn regularize(&self) -> BoxSet {
        let core = self.interior().dilate(1);
        self.intersect(&core).expect("same grid")
    }

    /// Hausdorff semi-distance `d(A|B)` over box centers. Errors when `B` is
    /// empty; returns 0 for empty `A`. The outer cell carries no center and
    /// is ignored.
    pub fn hausdorff_semidist(&self, other: &BoxSet) -> Result<f64> {
        self.check_grid(other)?;
        if other.members.is_empty() {
            return Err(Error::EmptyTarget);
        }
        let mut worst: f64 = 0.0;
        for &a in &self.members {
            let ca = self.grid.box_center(a);
            let mut best = f64::INFINITY;
            for &b in &other.members {
                let cb = self.grid.box_center(b);
                let d2: f64 =
                    ca.iter().zip(&cb).map(|(x, y)| (x - y) * (x - y)).sum();
                if d2 < best {
                    best = d2;
                }
            }
            worst = worst.max(best);
        }
        Ok(worst.sqrt())
    }

    /// Symmetric Hausdorff distance: max of both semi-distances.
    pub fn hausdorff_dist(&self, other: &BoxSet) -> Result<f64> {
        Ok(self.hausdorff_semidist(other)?.max(other.hausdorff_semidist(self)?))
    }

    /// CSV rows of box bounds: `fiber`-agnostic form `idx..., lo..., hi...`.
    pub fn csv_bounds(&self) -> String {
        let d = self.grid.dims();
        let mut out = String::new();
        let header: Vec<String> = (0..d)
            .map(|i| format!("i{i}"))
            .chain((0..d).map(|i| format!("lo{i}")))
            .chain((0..d).map(|i| format!("hi{i}")))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for &b in &self.members {
            let idx = self.grid.multi_index(b);
            let (lo, hi) = self.grid.box_bounds(b);
            let row: Vec<String> = idx
                .iter()
                .map(|v| v.to_string())
                .chain(lo.iter().map(|v| format!("{v}")))
                .chain(hi.iter().map(|v| format!("{v}")))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Serialized form: grid descriptor plus multi-indices.
#[derive(Debug, Serialize, Deserialize)]
pub struct BoxSetRepr {
    pub grid: Grid,
    pub boxes: Vec<Vec<u32>>,
    pub contains_outer: bool,
}

impl BoxSet {
    pub fn to_repr(&self) -> BoxSetRepr {
        BoxSetRepr {
            grid: (*self.grid).clone(),
            boxes: self.members.iter().map(|&b| self.grid.multi_index(b)).collect(),
            contains_outer: self.contains_outer,
        }
    }

    pub fn from_repr(repr: &BoxSetRepr) -> Result<BoxSet> {
        let grid = Grid::new(
            repr.grid.lo.clone(),
            repr.grid.hi.clone(),
            repr.grid.subdivisions.clone(),
        )?;
        let members: Vec<BoxId> =
            repr.boxes.iter().map(|idx| grid.id_from_multi(idx)).collect();
        Ok(BoxSet::from_ids(grid, members).with_outer(repr.contains_outer))
    }
}
