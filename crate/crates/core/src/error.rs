use thiserror::Error;

/// Errors produced while building models or running the pipeline.
#[derive(Debug, Error)]
pub enum SstpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid probability vector ({context}): {reason}")]
    Probability { context: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid reward: {0}")]
    Reward(String),

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("trajectory has {got} steps, expected {expected}")]
    TrajectoryLength { got: usize, expected: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SstpError>;

pub(crate) fn dim_err(msg: impl Into<String>) -> SstpError {
    SstpError::Dimension(msg.into())
}
