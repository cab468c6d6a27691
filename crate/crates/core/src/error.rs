use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the modelling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("truncation at {truncation} leaves tail mass {tail:e} (> {limit:e})")]
    Truncation { truncation: u64, tail: f64, limit: f64 },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("schema violation in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("trend matrix is rank deficient (rank {rank} < {columns} columns)")]
    Rank { rank: usize, columns: usize },

    #[error("optimizer did not converge: {0}")]
    Convergence(String),

    #[error("sampler did not converge: {0}")]
    Sampler(String),

    #[error("sampler initialization failed: {0}")]
    Initialization(String),

    #[error("calibration degenerate: {0}")]
    Calibration(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("JSON error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    pub(crate) fn schema(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Schema { path: path.into(), message: message.into() }
    }
}
