//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad user-supplied configuration (sizes, parameter ranges, counts).
    #[error("configuration error: {0}")]
    Config(String),

    /// Tensor or layer shape mismatch.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Malformed binary input; `offset` is the byte position of the problem.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    /// Mutually inconsistent inputs (e.g. image/label counts differ).
    #[error("consistency error: {0}")]
    Inconsistent(String),

    /// Value out of its declared domain (e.g. label >= class count).
    #[error("validation error: {0}")]
    Validation(String),

    /// A representation vector has zero norm; cosine similarity is undefined.
    #[error("degenerate representation: {0}")]
    Degenerate(String),

    /// Non-finite value where a finite one is required.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Violated internal invariant.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }
}
