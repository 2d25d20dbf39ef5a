use thiserror::Error;
use verdict_core::{CorpusError, MetricsError, SandboxError};

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    /// The input could not be read as the documented schema.
    #[error("bad request: {0}")]
    BadRequest(String),
    /// Well formed, but breaks an invariant (e.g. an empty group).
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<SandboxError> for HarnessError {
    fn from(e: SandboxError) -> Self {
        match e {
            SandboxError::BackendUnavailable(msg) => HarnessError::BackendUnavailable(msg),
            SandboxError::Io(e) => HarnessError::Io(e),
        }
    }
}

impl HarnessError {
    /// Stable identifier used in error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::BadRequest(_) => "bad_request",
            HarnessError::Invalid(_) => "invalid",
            HarnessError::BackendUnavailable(_) => "backend_unavailable",
            HarnessError::Metrics(_) => "shape_mismatch",
            HarnessError::Corpus(_) => "corpus",
            HarnessError::Io(_) => "io",
        }
    }

    /// 2 for configuration and input errors, 3 when no interpreter can run,
    /// 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) | HarnessError::BadRequest(_) => 2,
            HarnessError::BackendUnavailable(_) => 3,
            _ => 1,
        }
    }
}
