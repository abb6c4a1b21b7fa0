//! Sampled model of the driving noise: finite windows of noise values with
//! the shift acting as index translation.
//!
//! Draws are counter-based: the value at time index `t` depends only on
//! `(seed, t, model)`, so enlarging the window never perturbs earlier draws.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stationary noise models. All shipped models are ergodic by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseModel {
    IidUniform { lo: f64, hi: f64, dims: usize },
    IidDiscrete { values: Vec<Vec<f64>>, weights: Vec<f64> },
    Constant { value: Vec<f64> },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::IidUniform { lo, hi, dims } => {
                if !(lo < hi) {
                    return Err(Error::InvalidModel("uniform requires lo < hi".into()));
                }
                if *dims == 0 {
                    return Err(Error::InvalidModel("dims must be positive".into()));
                }
            }
            NoiseModel::IidDiscrete { values, weights } => {
                if values.is_empty() || values.len() != weights.len() {
                    return Err(Error::InvalidModel("values/weights length mismatch".into()));
                }
                let d = values[0].len();
                if values.iter().any(|v| v.len() != d) {
                    return Err(Error::InvalidModel("ragged discrete values".into()));
                }
                if weights.iter().any(|&w| w <= 0.0) {
                    return Err(Error::InvalidModel("weights must be positive".into()));
                }
                let sum: f64 = weights.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidModel(format!(
                        "weights sum to {sum}, expected 1 within 1e-12"
                    )));
                }
            }
            NoiseModel::Constant { value } => {
                if value.is_empty() {
                    return Err(Error::InvalidModel("constant value must be nonempty".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        match self {
            NoiseModel::IidUniform { dims, .. } => *dims,
            NoiseModel::IidDiscrete { values, .. } => values[0].len(),
            NoiseModel::Constant { value } => value.len(),
        }
    }

    pub fn support_contains(&self, v: &[f64]) -> bool {
        match self {
            NoiseModel::IidUniform { lo, hi, .. } => {
                v.iter().all(|x| *lo <= *x && *x <= *hi)
            }
            NoiseModel::IidDiscrete { values, .. } => values.iter().any(|c| c == v),
            NoiseModel::Constant { value } => value == v,
        }
    }

    /// The shift leaves the law invariant for every shipped model; i.i.d.
    /// product measures are in addition ergodic.
    pub fn ergodic_by_construction(&self) -> bool {
        true
    }

    /// Counter-based draw for time index `t`.
    pub fn draw(&self, seed: u64, t: i64) -> Vec<f64> {
        let mut rng = counter_rng(seed, t);
        match self {
            NoiseModel::IidUniform { lo, hi, dims } => {
                (0..*dims).map(|_| lo + unit_f64(&mut rng) * (hi - lo)).collect()
            }
            NoiseModel::IidDiscrete { values, weights } => {
                let u = unit_f64(&mut rng);
                let mut acc = 0.0;
                for (v, w) in values.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return v.clone();
                    }
                }
                values.last().unwrap().clone()
            }
            NoiseModel::Constant { value } => value.clone(),
        }
    }
}

fn counter_rng(seed: u64, t: i64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(t as u64).to_le_bytes());
    // fixed domain-separation tag
    key[16..24].copy_from_slice(&0x9e37_79b9_7f4a_7c15u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Uniform in [0, 1) from the top 53 bits, independent of library internals.
fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A sampled window of the noise: values at `t in {-T, ..., T-1}`, where the
/// value at `t` drives the step from fiber `t` to `t+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePath {
    pub seed: u64,
    pub half_window: usize,
    /// Accumulated shift: entry `t` holds the base draw at `t + offset`.
    pub offset: i64,
    pub model: NoiseModel,
    pub values: Vec<Vec<f64>>,
}

impl NoisePath {
    pub fn sample(model: &NoiseModel, seed: u64, half_window: usize) -> Result<NoisePath> {
        model.validate()?;
        if half_window == 0 {
            return Err(Error::InvalidModel("half window must be >= 1".into()));
        }
        let t_lo = -(half_window as i64);
        let values: Vec<Vec<f64>> =
            (0..2 * half_window).map(|i| model.draw(seed, t_lo + i as i64)).collect();
        Ok(NoisePath { seed, half_window, offset: 0, model: model.clone(), values })
    }

    /// Time range carrying values: `(-T, T-1)` inclusive.
    pub fn t_range(&self) -> (i64, i64) {
        let t = self.half_window as i64;
        (-t, t - 1)
    }

    pub fn value(&self, t: i64) -> Result<&[f64]> {
        let (lo, hi) = self.t_range();
        if t < lo || t > hi {
            return Err(Error::FiberOutOfWindow { t, lo, hi });
        }
        Ok(&self.values[(t - lo) as usize])
    }

    /// Reindex so that the new value at `t` reads the old value at `t + k`.
    /// The window shrinks to the valid overlap.
    pub fn shift(&self, k: i64) -> Result<NoisePath> {
        if k.unsigned_abs() as usize >= self.half_window {
            return Err(Error::WindowExhausted { k, half_window: self.half_window });
        }
        let new_half = self.half_window - k.unsigned_abs() as usize;
        let t_lo_new = -(new_half as i64);
        let (old_lo, _) = self.t_range();
        let values: Vec<Vec<f64>> = (0..2 * new_half)
            .map(|i| {
                let t = t_lo_new + i as i64;
                self.values[(t + k - old_lo) as usize].clone()
            })
            .collect();
        Ok(NoisePath {
            seed: self.seed,
            half_window: new_half,
            offset: self.offset + k,
            model: self.model.clone(),
            values,
        })
    }
}
