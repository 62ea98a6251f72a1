//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by estimation, sampling, and serialization routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A dimension disagrees with what the operation requires.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// An argument is outside the operation's domain.
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    /// The input data cannot support the requested computation.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Power iteration stopped before reaching the requested tolerance.
    /// `last_estimate` is a lower bound on the spectral norm.
    #[error("power iteration did not converge after {iterations} iterations (last estimate {last_estimate:.6e})")]
    NotConverged {
        iterations: usize,
        last_estimate: f64,
    },

    /// A dense-matrix path was requested above its supported size.
    #[error("{context}: size {actual} exceeds the dense-path limit {limit}")]
    TooLargeForDense {
        context: &'static str,
        limit: usize,
        actual: usize,
    },

    /// The circulant embedding has a negative eigenvalue too large to clip
    /// and the matrix is too big for the dense fallback.
    #[error("circulant embedding is indefinite (min eigenvalue {min_eig:.3e}) and p = {p} exceeds the dense fallback limit")]
    IndefiniteEmbedding { min_eig: f64, p: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A text value failed to parse; positions are 1-based.
    #[error("parse error at line {line}, field {field}: {reason}")]
    Parse {
        line: usize,
        field: usize,
        reason: String,
    },

    /// A scenario description is structurally invalid.
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

pub type Result<T> = std::result::Result<T, Error>;
