use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("output directory {0} does not exist")]
    MissingOutputDir(PathBuf),
    #[error("cannot bind {0}: address already in use")]
    PortBusy(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] curvemrf::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for a missing output directory, 3 for a busy port, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::MissingOutputDir(_) => 2,
            CliError::PortBusy(_) => 3,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
