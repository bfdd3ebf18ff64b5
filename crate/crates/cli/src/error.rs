use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CHECK: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("{0}")]
    Validation(String),

    #[error("check failed: {0}")]
    Check(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Core(#[from] rbse::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use rbse::Error as E;
        match self {
            CliError::Config(_) | CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Check(_) => EXIT_CHECK,
            CliError::File { .. } | CliError::Format(_) => EXIT_IO,
            CliError::Core(e) => match e {
                E::Io(_)
                | E::Csv(_)
                | E::Json(_)
                | E::BadMagic { .. }
                | E::Truncated { .. }
                | E::Checksum { .. } => EXIT_IO,
                _ => EXIT_VALIDATION,
            },
        }
    }

    pub fn file(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::File { path, source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
