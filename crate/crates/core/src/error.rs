use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("hash function needs at least one bin")]
    ZeroBins,

    #[error("value {value} out of range 1..={max} for {what}")]
    ValueOutOfRange { what: &'static str, value: u64, max: u64 },

    #[error("observation has {got} coordinates, model has {expected} variables")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("estimator is empty (n = 0)")]
    Empty,

    #[error("delta is undefined for a model without edges")]
    NoEdges,

    #[error("joint table for variable {variable} needs {cells} cells, more than the dense limit")]
    TableTooLarge { variable: usize, cells: u128 },

    #[error("cannot merge sketches with different configurations: {0}")]
    ConfigMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precision is undefined for a zero true probability")]
    ZeroTruth,

    #[error("envelope is unbounded: factor frequency for variable {variable} is zero")]
    UnboundedEnvelope { variable: usize },

    #[error("parse error at {path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
