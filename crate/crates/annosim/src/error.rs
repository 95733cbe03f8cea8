//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by dataset handling, metric computation, and training.
#[derive(Debug, Error)]
pub enum Error {
    /// A dataset file could not be parsed; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Input passed structural parsing but violates a domain constraint.
    #[error("validation error: {0}")]
    Validation(String),

    /// An API precondition was not met by the caller.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A numeric quantity became non-finite or otherwise unusable.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An experiment configuration is malformed or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
