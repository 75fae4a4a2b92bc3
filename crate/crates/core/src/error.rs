use std::path::PathBuf;

use sed_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SedError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Audio { path: PathBuf, detail: String },
    #[error("{path}:{line}: {detail}")]
    Manifest {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl SedError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SedError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the file system or malformed input files.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            SedError::Io { .. } | SedError::Audio { .. } | SedError::Manifest { .. } | SedError::Checkpoint(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, SedError>;

pub(crate) fn config_err(detail: impl Into<String>) -> SedError {
    SedError::Config(detail.into())
}

pub(crate) fn invalid(detail: impl Into<String>) -> SedError {
    SedError::Invalid(detail.into())
}
