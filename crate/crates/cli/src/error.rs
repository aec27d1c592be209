use modpoly_core::{NetError, TrainError};
use thiserror::Error;

use crate::parse::ParseError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("task error: {0}")]
    Parse(#[from] ParseError),
    #[error("run aborted: {0}")]
    Diverged(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Parse(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::Net(NetError::Field(_) | NetError::WidthTooSmall { .. } | NetError::ZeroExponent { .. }) => 2,
            _ => 1,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Net(n) => CliError::Net(n),
            TrainError::InvalidConfig(msg) => CliError::Config(msg),
            TrainError::DatasetTooLarge { .. } => CliError::Config(e.to_string()),
            TrainError::Diverged { .. } => CliError::Diverged(e.to_string()),
        }
    }
}
