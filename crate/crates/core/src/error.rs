use thiserror::Error;

use crate::training::RunRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not a group: {0}")]
    NotAGroup(String),

    #[error("point outside the domain: {0}")]
    OutOfDomain(String),

    #[error("inconsistent domain specification: {0}")]
    Domain(String),

    #[error("weight rationalization failed: {0}")]
    Precision(String),

    #[error("exact transport cap exceeded: {0}")]
    CapExceeded(String),

    #[error("training diverged at generator step {step}")]
    TrainingDiverged { step: usize, record: Box<RunRecord> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
