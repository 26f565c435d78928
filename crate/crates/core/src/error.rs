use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid statement: {0}")]
    InvalidStatement(String),

    #[error("record {record}: {message}")]
    InvalidRecord { record: usize, message: String },

    #[error("statement has no entity types; type markers need both head_type and tail_type")]
    MissingEntityType,

    #[error("statement is unlabelled")]
    MissingLabel,

    #[error("unknown relation '{0}'")]
    UnknownRelation(String),

    #[error("invalid split fractions: {0}")]
    InvalidFraction(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid layer range ({from}, {to}] for a {layers}-layer encoder")]
    LayerRange { from: usize, to: usize, layers: usize },

    #[error("input of {len} tokens exceeds max_seq_len {max}")]
    Overlength { len: usize, max: usize },

    #[error("mix layer {layer} is not in the configured mixup layer set {allowed:?}")]
    LayerNotInMixSet { layer: usize, allowed: Vec<usize> },

    #[error("backward called without a recorded forward pass")]
    NoRecordedForward,

    #[error("no hypothesis satisfying all constraints within {max_len} tokens")]
    Unsatisfiable { max_len: usize },

    #[error("translation failed: {0}")]
    Translation(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
