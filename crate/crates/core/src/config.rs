//! Declarative specs for grids and geometric box-set predicates, shared by
//! the sweep harness, the CLI and the browser demo.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::boxset::{BoxSet, Grid};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub subdivisions: Vec<u32>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<Grid>> {
        Grid::new(self.lo.clone(), self.hi.clone(), self.subdivisions.clone())
    }
}

/// Geometric predicate selecting the boxes that intersect a region.
/// Intervals and product sets are rectangles; 1D rectangles are intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum SetSpec {
    Ball { center: Vec<f64>, radius: f64 },
    Rect { lo: Vec<f64>, hi: Vec<f64> },
}

impl SetSpec {
    pub fn cover(&self, grid: &Arc<Grid>) -> Result<BoxSet> {
        match self {
            SetSpec::Ball { center, radius } => BoxSet::cover_ball(grid.clone(), center, *radius),
            SetSpec::Rect { lo, hi } => BoxSet::cover_rect(grid.clone(), lo, hi),
        }
    }
}
