use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the inference pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("value {value} lies outside the domain [{lower}, {upper}]")]
    Domain { value: f64, lower: f64, upper: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// One or more input rows failed validation; each entry names the line and reason.
    #[error("schema error: {}", .0.join("; "))]
    Schema(Vec<String>),

    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("matrix is not positive definite in {0}")]
    NotPositiveDefinite(&'static str),

    #[error("non-finite state at iteration {iteration} after block `{block}`")]
    NonFinite { iteration: usize, block: &'static str },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("truncated file {path}: expected {expected} rows, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("fingerprint mismatch: draws were produced from {stored}, data is {actual}")]
    FingerprintMismatch { stored: String, actual: String },

    #[error("unknown athlete `{0}`")]
    UnknownAthlete(String),

    #[error("no draws available")]
    EmptyDraws,

    #[error("need at least {needed} draws, got {got}")]
    TooFewDraws { needed: usize, got: usize },

    #[error("posterior cannot be normalized on the integration range")]
    Unnormalizable,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
