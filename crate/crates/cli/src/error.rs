use iotsam_core::{CampaignError, FilterError, StoreError};
use thiserror::Error;

/// Failure of one invocation, carrying its exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or unreadable input files; exit 2.
    #[error("{0}")]
    Usage(String),
    /// Validation or pipeline error; exit 1.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Failed(_) => 1,
        }
    }
}

impl From<CampaignError> for CliError {
    fn from(e: CampaignError) -> Self {
        Self::Failed(e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        Self::Failed(e.to_string())
    }
}

impl From<FilterError> for CliError {
    fn from(e: FilterError) -> Self {
        Self::Failed(e.to_string())
    }
}
