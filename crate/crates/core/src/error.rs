use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("node {0} missing community")]
    MissingCommunity(u64),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("community {0} is empty after sampling")]
    EmptyCommunity(usize),

    #[error("config dimension mismatch: {0}")]
    Dimension(String),

    #[error("snapshot version mismatch: expected {expected}, found {found}")]
    SnapshotVersion { expected: u32, found: u32 },

    #[error("snapshot is not a tacit snapshot")]
    SnapshotMagic,

    #[error("snapshot encoding: {0}")]
    SnapshotCodec(String),

    #[error("non-finite value in feature matrix at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("node {0} missing from treatment map")]
    MissingNode(usize),

    #[error("impactedness sums to zero")]
    ZeroImpactedness,

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
