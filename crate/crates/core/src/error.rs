//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("NLP construction failed in block `{block}`: {reason}")]
    Construction { block: String, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("solve failed: {0}")]
    SolveFailure(String),

    #[error("projection failed: {0}")]
    ProjectionFailed(String),

    #[error("no weight vector separates the suboptimal set from the reference features")]
    MarginInfeasible,

    #[error("forward optimization found no feasible gait: {0}")]
    InfeasibleGait(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
