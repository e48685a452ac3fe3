use thiserror::Error;

/// Errors produced by the simulation and inference routines.
///
/// Several variants (`MomentMismatch`, `NotPositiveDefinite`, `NoConvergence`)
/// are recoverable: the samplers treat them as a rejected proposal.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("no coarse block intersects the domain")]
    EmptyDomain,
    #[error("location ({0}, {1}) is outside the domain")]
    OutOfDomain(f64, f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not positive definite after jitter")]
    NotPositiveDefinite,
    #[error("moment inversion failed at index {index}: log argument {argument} <= 0")]
    MomentMismatch { index: usize, argument: f64 },
    #[error("mode search did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("gradient ascent diverged (objective decreased {0} consecutive times)")]
    Diverged(usize),
    #[error("cell mean {0} exceeds the simulation limit")]
    Overflow(f64),
    #[error("series too short: need at least {need}, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Numerical failures that a sampler converts into a rejection.
    pub fn is_recoverable(&self) -> bool {
        matches!(
            self,
            Error::MomentMismatch { .. } | Error::NotPositiveDefinite | Error::NoConvergence(_) | Error::Overflow(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
