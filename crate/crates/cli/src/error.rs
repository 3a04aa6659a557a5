//! CLI error type mapping every failure to a stable process exit code:
//! 0 success, 1 numeric failure (divergent training, failed gradient
//! audit), 2 input error (bad arguments, missing or malformed inputs),
//! 3 I/O error (unreadable or unwritable files).

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A computation produced an unusable numeric result.
    #[error("{0}")]
    Numeric(String),
    /// The caller supplied something invalid.
    #[error("{0}")]
    Input(String),
    /// Reading or writing a file failed.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 1,
            CliError::Input(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    /// An I/O error naming the file involved.
    pub fn io(path: &Path, err: impl std::fmt::Display) -> CliError {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    /// An input error naming the file involved.
    pub fn input(path: &Path, err: impl std::fmt::Display) -> CliError {
        CliError::Input(format!("{}: {err}", path.display()))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
