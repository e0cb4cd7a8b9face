use std::path::PathBuf;

use mpcforest_core::pipeline::PipelineError;
use mpcforest_core::treecolor::TreeColorError;
use mpcforest_core::{GraphError, MpcError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid arguments: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("verifier failed: {0}")]
    Verify(String),
    #[error("solutions differ: {0}")]
    Mismatch(String),
    #[error("capacity exceeded: {0}")]
    Capacity(MpcError),
    #[error("retries exhausted: {0}")]
    RetriesExhausted(TreeColorError),
    #[error("{0}")]
    Pipeline(PipelineError),
    #[error("{0}")]
    TreeColor(TreeColorError),
}

impl CliError {
    /// 2 bad arguments or precondition, 3 verifier or comparison failure,
    /// 4 capacity exceeded, 5 retries exhausted, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) | CliError::Input { .. } => 2,
            CliError::Verify(_) | CliError::Mismatch(_) => 3,
            CliError::Capacity(_) => 4,
            CliError::RetriesExhausted(_) => 5,
            CliError::Io { .. } | CliError::Pipeline(_) | CliError::TreeColor(_) => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub(crate) fn graph(path: impl Into<PathBuf>, e: GraphError) -> Self {
        CliError::Input { path: path.into(), message: e.to_string() }
    }
}

impl From<MpcError> for CliError {
    fn from(e: MpcError) -> Self {
        match e {
            MpcError::CapacityExceeded { .. } => CliError::Capacity(e),
            MpcError::InvalidConfig(why) => CliError::Invalid(why.into()),
            other => CliError::Pipeline(PipelineError::Mpc(other)),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Mpc(m) => m.into(),
            PipelineError::DegreeTooLarge { .. } => CliError::Invalid(e.to_string()),
            other => CliError::Pipeline(other),
        }
    }
}

impl From<TreeColorError> for CliError {
    fn from(e: TreeColorError) -> Self {
        match e {
            TreeColorError::Mpc(m) => m.into(),
            TreeColorError::NotAForest { .. } | TreeColorError::DegreeTooLarge { .. } => {
                CliError::Invalid(e.to_string())
            }
            TreeColorError::RetriesExhausted { .. } => CliError::RetriesExhausted(e),
            TreeColorError::ScheduleConflict { .. } => CliError::Verify(e.to_string()),
            other => CliError::TreeColor(other),
        }
    }
}
