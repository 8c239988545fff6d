//! Crate-wide error type.
//!
//! Construction-time validation (bad logits, incompatible shapes, malformed
//! files) reports through [`Error`]; value-level shape mismatches inside hot
//! numeric kernels are treated as programmer error and panic via `assert!`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A logit vector contained a NaN or infinity, or was empty.
    #[error("invalid logits: {0}")]
    InvalidLogits(String),

    /// A binary sample contained an entry other than 0 or 1.
    #[error("invalid binary sample: {0}")]
    InvalidSample(String),

    /// Two inputs that must share a dimension do not.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An argument violated a documented precondition (e.g. K < 2 for a
    /// leave-one-out estimator, or an antithetic draw with K != 2).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An exhaustive enumeration was requested for a dimension too large to
    /// enumerate.
    #[error("enumeration over {dim} dimensions exceeds the supported limit of {max}")]
    EnumerationTooLarge { dim: usize, max: usize },

    /// A dataset file failed to parse.
    #[error("dataset format error: {0}")]
    DatasetFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
