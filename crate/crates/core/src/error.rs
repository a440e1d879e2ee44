use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("attention over an empty point set (row {row} fully masked)")]
    FullyMasked { row: usize },
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("input too short: need at least {needed}, got {got}")]
    InputTooShort { needed: usize, got: usize },
    #[error("backward called on a tape that was already consumed")]
    TapeConsumed,
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("clip is silent after trimming")]
    EmptyClip,
    #[error("gradient subsampling needs a cloud backed by a complete time-frequency grid")]
    NoGrid,
    #[error("unsupported input size: {0}")]
    Unsupported(String),
    #[error("non-finite loss at epoch {epoch}, step {step}: {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("wav error in {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
