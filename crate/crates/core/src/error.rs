use thiserror::Error;

use crate::gpd::GpdParams;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("timestamps are not strictly increasing in group ({observer}, {image}) at line {line}")]
    NonMonotonic {
        observer: String,
        image: String,
        line: usize,
    },

    #[error("no traces in input")]
    NoTraces,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point ({u}, {v}) is not strictly inside the unit disc")]
    OutsideDisc { u: f64, v: f64 },

    #[error("need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("fit did not converge after {iterations} iterations (best: {best:?})")]
    NonConvergence { iterations: usize, best: GpdParams },

    #[error("observer {0} not present in any selected image")]
    UnknownObserver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
