use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("kernel size mismatch: {left} rows vs {right} rows")]
    SizeMismatch { left: usize, right: usize },

    #[error("singular kernel: diagonal entry of row {row} is {value:e}")]
    SingularKernel { row: usize, value: f64 },

    #[error("solvability condition violated at step {step}: {detail}")]
    Solvability { step: usize, detail: String },

    #[error("nonlinear solve failed at step {step} after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("envelope hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
