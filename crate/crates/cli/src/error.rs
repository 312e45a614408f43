use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    NonConvergence(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] efcp_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use efcp_core::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Parse { .. } | CliError::Data(_) | CliError::Io { .. } => EXIT_DATA,
            CliError::NonConvergence(_) => EXIT_NONCONVERGENCE,
            CliError::Core(e) => match e {
                E::InvalidConfig(_) | E::InvalidPattern(_) | E::MetricPatternMismatch { .. } => {
                    EXIT_USAGE
                }
                E::EmptyWarpSet => EXIT_NONCONVERGENCE,
                _ => EXIT_DATA,
            },
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
