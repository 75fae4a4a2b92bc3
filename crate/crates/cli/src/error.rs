use tfd_sed::SedError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A requested check ran and did not pass.
    #[error("check failed: {0}")]
    Check(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Sed(#[from] SedError),
}

impl CliError {
    /// 0 success, 1 check failure, 2 usage error, 3 I/O error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Sed(SedError::Config(_)) => 2,
            CliError::Sed(e) if e.is_io() => 3,
            CliError::Sed(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Sed(SedError::io(path, e))
}
