//! Error type shared by all models in this crate.

use thiserror::Error;

/// Errors produced by kernel algebra, model fitting, and the emulation loop.
#[derive(Debug, Error)]
pub enum Error {
    /// Mismatched vector or matrix dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Invalid argument (non-finite data, non-positive hyperparameter, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Cholesky factorization failed for every jitter in the schedule.
    /// `pivot` is the smallest failing pivot index over all attempts.
    #[error("matrix not positive definite: pivot {pivot} (value {value:.6e}) failed for every jitter in the schedule")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    /// A hyperparameter search was given no candidates.
    #[error("empty hyperparameter grid")]
    EmptyGrid,

    /// No candidate in a search produced a finite objective value.
    #[error("search exhausted its budget without a finite objective value")]
    NoFiniteObjective,

    /// An oracle evaluation failed; the offending input point is attached.
    #[error("oracle evaluation failed at {point:?}: {message}")]
    OracleFailure { point: Vec<f64>, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
