use thiserror::Error;

/// Errors shared across the crate.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The left-out class 0 sample is too small for any order statistic to
    /// satisfy the violation-rate bound. Carries the exact requirement so
    /// callers know how much data (or how much larger alpha/delta) they need.
    #[error(
        "insufficient class 0 sample: n = {n} but n_min = {n_min} is required \
         for alpha = {alpha}, delta = {delta}; increase the class 0 sample, \
         alpha, or delta"
    )]
    InsufficientSample {
        n: usize,
        n_min: usize,
        alpha: f64,
        delta: f64,
    },

    #[error("cannot fit scorer: {0}")]
    Unfit(String),

    #[error("dimension mismatch: model expects {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
