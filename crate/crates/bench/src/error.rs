use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field '{field}': {msg}")]
    Invalid { field: String, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Core(#[from] skg_core::Error),
}

impl BenchError {
    /// Process exit code: 2 for file-system failures, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            BenchError::Io { .. } | BenchError::Csv { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
