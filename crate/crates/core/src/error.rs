//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("duplicate distribution id `{0}`")]
    DuplicateId(String),

    #[error("weights for `{id}` sum to {sum} (must sum to 1 within 1e-9)")]
    WeightNormalization { id: String, sum: f64 },

    #[error("support index {index} out of range for support size {support_size}")]
    IndexOutOfRange { index: usize, support_size: usize },

    #[error("unknown kernel family `{0}`")]
    UnknownFamily(String),

    #[error("kernel family mismatch: {0}")]
    FamilyMismatch(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("solver did not converge: KKT gap {gap:.3e} after {iterations} iterations")]
    NoConvergence { gap: f64, iterations: usize },

    #[error("id mismatch: {0}")]
    IdMismatch(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
