use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("empty target")]
    EmptyTarget,

    #[error("invalid noise model: {0}")]
    InvalidModel(String),

    #[error("window exhausted: |{k}| >= half window {half_window}")]
    WindowExhausted { k: i64, half_window: usize },

    #[error("fiber {t} out of window [{lo}, {hi}]")]
    FiberOutOfWindow { t: i64, lo: i64, hi: i64 },

    #[error("noise value outside model support at fiber {t}")]
    NoiseOutsideSupport { t: i64 },

    #[error("missing Lipschitz bound for sampled enclosure")]
    MissingLipschitzBound,

    #[error("inverse unavailable for this map family")]
    InverseUnavailable,

    #[error("no block at this resolution")]
    NoBlockAtResolution,

    #[error("no valid L at this resolution")]
    NoValidL,

    #[error("absorption time exceeds window at fiber {t}")]
    AbsorptionExceedsWindow { t: i64 },

    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),

    #[error("pairs isolate different sets")]
    PairsIsolateDifferentSets,

    #[error("chain block not inside both pairs - increase resolution")]
    ChainBlockNotInside,

    #[error("config error: {0}")]
    Config(String),

    #[error("integrator step rejected (non-finite state) at fiber {t}")]
    IntegratorRejected { t: i64 },
}

pub type Result<T> = std::result::Result<T, Error>;
