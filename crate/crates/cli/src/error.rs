use fcd_core::CoreError;
use thiserror::Error;

use crate::config::Stage;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing artifact {path}: run stage `{stage}` first")]
    MissingArtifact { path: String, stage: Stage },

    #[error("stage `{stage}` check failed: {reason}")]
    Check { stage: Stage, reason: String },

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;
