//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by data handling, model evaluation, and inference.
#[derive(Debug, Error)]
pub enum Error {
    /// Input does not match the declared schema (columns, dimensions, shapes).
    #[error("schema mismatch: {0}")]
    Schema(String),

    /// A value violates its domain (treatment not in {{0,1}}, probabilities
    /// outside (0,1), empty splits, bad flags).
    #[error("invalid value: {0}")]
    InvalidValue(String),

    /// Numerical failure: Cholesky breakdown, non-finite objective, all
    /// restarts diverged.
    #[error("numerical failure: {0}")]
    Numerics(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
