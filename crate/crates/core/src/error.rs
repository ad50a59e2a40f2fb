use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("environment stepped before reset")]
    NotReset,

    #[error("episode already finished after {horizon} steps")]
    EpisodeFinished { horizon: usize },

    #[error("invalid layer sizes {0:?}")]
    InvalidLayers(Vec<usize>),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("forward cache does not match network shape")]
    StaleCache,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    ConfigParse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by bad user input rather than a failing run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig { .. }
                | Error::InvalidLayers(_)
                | Error::InvalidScenario(_)
                | Error::ConfigParse { .. }
                | Error::Checkpoint { .. }
                | Error::Io { .. }
        )
    }
}
