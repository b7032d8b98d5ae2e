use std::path::PathBuf;

use crate::grid::Label;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimensions(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("failed to load {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("no {0:?} seed pixels; add at least one stroke of each label")]
    MissingSeeds(Label),

    #[error("cannot fit a color model to an empty pixel set")]
    EmptyModel,

    #[error("pixel ({x}, {y}) outside {width}x{height} image")]
    OutOfBounds {
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },

    #[error("policy {0} needs the recyclable GCS energy and cannot drive other systems")]
    UnsupportedPolicy(String),

    #[error("QP solver did not converge: KKT residual {residual:e} after {iterations} iterations")]
    QpNonConvergence { residual: f64, iterations: usize },

    #[error("{0}")]
    Other(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
