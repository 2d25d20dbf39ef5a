//! Operational shell around `verdict-core`: configuration, the scoring
//! service, offline evaluation reports and score-log replay.

pub mod config;
pub mod error;
pub mod harness;
pub mod log;
pub mod replay;
pub mod service;
pub mod wire;

pub use config::{BackendConfig, ConfigError, HarnessConfig};
pub use error::HarnessError;
pub use harness::{EvalOutput, Harness, Health};
pub use wire::{
    EvaluateRequest, GenerationRecord, ScoreFlags, ScoreRequest, ScoreResponse, WIRE_SCHEMA_VERSION,
};
