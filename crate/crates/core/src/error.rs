use std::path::PathBuf;

/// Errors raised by the simulation library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid payoff: {0}")]
    InvalidPayoff(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error(
        "step size eta = {eta} exceeds {bound_label} = {bound}; {regime}"
    )]
    StepSizeRegime {
        eta: f64,
        bound: f64,
        bound_label: &'static str,
        regime: &'static str,
    },

    #[error("non-finite state at step {step}: the iteration diverged")]
    Divergence { step: u64 },

    #[error("no convergence within {iters} iterations (residual {residual:e})")]
    NotConverged { iters: usize, residual: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("rate envelope violated at iteration {step}: {value:e} > {envelope:e}")]
    EnvelopeViolated { step: usize, value: f64, envelope: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("snapshot {path}: {reason}")]
    Snapshot { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(context: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            got,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
