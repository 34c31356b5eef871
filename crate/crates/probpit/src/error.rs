//! Error type shared across the library.

use thiserror::Error;

/// Errors produced by DSP, loss, separator, and metrics operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Matrix or buffer dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input data violates a precondition (NaN samples, empty split,
    /// rank-deficient source set, degenerate statistics, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A numeric failure inside a computation (non-finite activation,
    /// diverging loss).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Checkpoint container has an unsupported version tag.
    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    /// A stale or foreign forward cache was handed to backward.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {path}: {source}")]
    Wav {
        path: String,
        #[source]
        source: hound::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn wav(path: impl Into<String>, source: hound::Error) -> Self {
        Error::Wav { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
