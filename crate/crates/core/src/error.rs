use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes disagree (vector dimensions, batch sizes, layouts).
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A violation of the server/client version protocol.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("non-finite value at local step {step}")]
    Numerical { step: usize },

    #[error("{path}: line {line}: {message}")]
    Ingest {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Ingest { .. })
    }
}
