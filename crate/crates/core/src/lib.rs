//! Set-oriented computation of random Conley indices along sampled noise
//! paths: box-grid enclosures of random maps, isolating neighborhoods and
//! blocks, filtration pairs, quotient pointed-space maps, triviality
//! certificates, shift-equivalence witnesses, and continuation/robustness
//! sweeps.

pub mod boxset;
pub mod config;
pub mod conley;
pub mod enclosure;
pub mod error;
pub mod graph;
pub mod harness;
pub mod interval;
pub mod noise;
pub mod shiftequiv;

pub use boxset::{BoxId, BoxSet, Cell, Grid, Point};
pub use enclosure::{build_enclosure, FiberedEnclosure, FiberedSet, MapFamily, MapKind};
pub use error::{Error, Result};
pub use noise::{NoiseModel, NoisePath};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
