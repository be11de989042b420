use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure talking to a model backend.
#[derive(Debug, Error)]
pub enum BackendError {
    /// Network or server-side failure; worth retrying.
    #[error("transport error: {0}")]
    Transport(String),
    /// The backend answered with something that breaks its contract.
    #[error("protocol error: {0}")]
    Protocol(String),
    /// Retrying will not help (wrong dimension, missing model, offline mode).
    #[error("backend configuration error: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("stage interrupted after {completed} of {total} samples: {source}")]
    Interrupted {
        completed: usize,
        total: usize,
        #[source]
        source: BackendError,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this failure class.
    ///
    /// 2 = configuration, 3 = backend, 4 = validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io { .. } => 2,
            Error::Backend(BackendError::Config(_)) => 2,
            Error::Backend(_) | Error::Interrupted { .. } => 3,
            Error::Parse { .. } | Error::Schema(_) | Error::Invalid(_) => 4,
        }
    }
}
