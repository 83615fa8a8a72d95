//! Crate-wide error type.
//!
//! Every fallible public operation returns [`Error`]. Variants map onto the
//! CLI exit-code classes: usage (2), data (3), numeric (4).

use crate::head::ScoringHead;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied parameter violates a precondition (bad flag value,
    /// k > n, sigma <= 0, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Operand shapes do not match; there is no silent broadcasting.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A text row could not be parsed; `line` is 1-based and counts the
    /// header.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Structurally valid input that violates a dataset invariant
    /// (duplicate id, inconsistent dimension, missing labels, ...).
    #[error("schema error: {0}")]
    Schema(String),

    /// A binary payload is not in the expected format (bad magic, bad
    /// version).
    #[error("format error: {0}")]
    Format(String),

    /// A sampling or batching request exceeds what the data can provide.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// A computation produced or received non-finite values.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Training aborted on a non-finite loss; carries the last checkpoint
    /// that was still finite.
    #[error("numeric error: non-finite loss at epoch {epoch}")]
    NonFiniteLoss {
        epoch: usize,
        last_good: Box<ScoringHead>,
    },

    /// An API contract was violated (stale cache, mismatched call sequence).
    #[error("contract error: {0}")]
    Contract(String),

    /// Command usage error (unknown method name, empty grid, ...).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code class for the CLI: 2 usage, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Numeric(_) | Error::NonFiniteLoss { .. } => 4,
            _ => 3,
        }
    }
}
