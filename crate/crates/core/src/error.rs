use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SomError>;

#[derive(Debug, Error)]
pub enum SomError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("ragged input: row {row} has {found} columns, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corrupt shard {path}: {msg}")]
    CorruptShard { path: PathBuf, msg: String },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("topology graph is disconnected ({0} unreachable node pairs)")]
    Disconnected(usize),

    #[error("non-finite update for node {node}")]
    NonFinite { node: usize },

    #[error("reduce timed out after {waited_ms} ms waiting for worker(s) {missing:?}")]
    ReduceTimeout { missing: Vec<usize>, waited_ms: u128 },

    #[error("worker {worker} failed: {msg}")]
    Worker { worker: usize, msg: String },

    #[error("run exceeded its deadline at iteration {iter}")]
    Deadline { iter: usize },

    #[error("config error: {0}")]
    Config(String),
}

impl SomError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SomError::Io {
            path: path.into(),
            source,
        }
    }
}
