use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema mismatch: missing columns {0:?}")]
    MissingColumns(Vec<String>),

    #[error("no episodes")]
    NoEpisodes,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("degenerate dimension `{0}`: min equals max")]
    DegenerateDimension(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("distribution is not normalized (sum = {0})")]
    Unnormalized(f64),

    #[error("index {index} out of range for dimension {dim} (size {size})")]
    IndexOutOfRange { dim: usize, index: usize, size: usize },

    #[error("semantic dimension `{dimension}`: {msg}")]
    Expression { dimension: String, msg: String },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("missing prerequisite: run `{0}` first")]
    MissingPrerequisite(String),

    #[error("stale prerequisite: `{0}` was produced with a different configuration or seed; rerun it")]
    StalePrerequisite(String),

    #[error("prism format: {0}")]
    Prism(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
