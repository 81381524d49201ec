use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: malformed file at byte {offset}: {message}", path.display())]
    Format { path: PathBuf, offset: u64, message: String },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// Process exit status: 1 validation, 2 numerical, 3 I/O or file format.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io { .. } | CliError::Format { .. } => 3,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }
}

impl From<phasefac::Error> for CliError {
    fn from(e: phasefac::Error) -> Self {
        match e {
            phasefac::Error::InvalidInput(m) => CliError::Validation(m),
            other => CliError::Numerical(other.to_string()),
        }
    }
}
