use thiserror::Error;

/// Errors raised by the sampler, learners and certification routines.
#[derive(Debug, Error)]
pub enum GgmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} out of range: {value} not in 0..{bound}")]
    OutOfRange {
        what: &'static str,
        value: usize,
        bound: usize,
    },

    #[error("state space {vocab}^{len} exceeds the enumeration cap of {cap} states")]
    CapExceeded { vocab: usize, len: usize, cap: usize },

    #[error("probability table sums to {sum}, expected 1 within {tol:e}")]
    NotNormalized { sum: f64, tol: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("conditional probability undefined: {0}")]
    UndefinedConditional(String),

    #[error("degenerate distribution at step {step}: all candidate scores are zero")]
    Degenerate { step: usize },

    #[error("division-domain error: {0}")]
    Domain(String),

    #[error("numeric guard: {0}")]
    NumericGuard(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = GgmError> = std::result::Result<T, E>;
