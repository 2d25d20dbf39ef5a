//! JSON documents exchanged with trainers, the CLI and the score log.

use serde::{Deserialize, Serialize};
use uuid::Uuid;
use verdict_core::{AnswerValue, BackendId, Breakdown, EvalReport, OutcomeKind, PromptMode, TestCase};

/// Bumped on any incompatible change to the documents below.
pub const WIRE_SCHEMA_VERSION: u32 = 1;

fn current_version() -> u32 {
    WIRE_SCHEMA_VERSION
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreFlags {
    /// Adds the length component; the configured default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_reward: Option<bool>,
    /// Free-form training regime label (e.g. "no-KL"), echoed back.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    #[serde(default = "current_version")]
    pub schema_version: u32,
    pub problem_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    pub ground_truth: AnswerValue,
    /// Per-case queries for task-pack problems; empty for single-answer ones.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test_cases: Vec<TestCase>,
    pub backend: BackendId,
    pub completions: Vec<String>,
    #[serde(default)]
    pub flags: ScoreFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedFlags {
    pub length_reward: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,
}

/// Every vector has one entry per completion, in request order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub schema_version: u32,
    pub problem_id: String,
    pub backend: BackendId,
    pub group_size: usize,
    pub flags: ResolvedFlags,
    pub breakdowns: Vec<Breakdown>,
    pub totals: Vec<f64>,
    pub advantages: Vec<f64>,
    pub outcomes: Vec<OutcomeKind>,
    /// Value the query bound, when it bound one.
    pub answers: Vec<Option<AnswerValue>>,
    pub reasoning_tokens: Vec<usize>,
    pub wall_times_ms: Vec<f64>,
}

/// Completions recorded for one problem; one line of a generations file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub problem_id: String,
    pub completions: Vec<String>,
}

fn default_k() -> usize {
    4
}

fn default_backend() -> BackendId {
    BackendId::LogicProlog
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateRequest {
    #[serde(default = "current_version")]
    pub schema_version: u32,
    pub dataset_id: String,
    pub prompt_mode: PromptMode,
    pub checkpoint_label: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_backend")]
    pub backend: BackendId,
    /// Fill short candidate lists with empty completions instead of failing.
    #[serde(default)]
    pub pad: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_reward: Option<bool>,
    pub generations: Vec<GenerationRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub schema_version: u32,
    pub job_id: Uuid,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub schema_version: u32,
    pub error: ErrorBody,
}

/// One line of the append-only score log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub schema_version: u32,
    pub logged_at_ms: u64,
    pub request: ScoreRequest,
    pub response: ScoreResponse,
}

/// Canonical form used to compare two responses: fields sorted, wall times
/// dropped since they differ run to run.
pub fn comparable(response: &ScoreResponse) -> serde_json::Value {
    let mut value = serde_json::to_value(response).expect("responses serialize");
    if let Some(map) = value.as_object_mut() {
        map.remove("wall_times_ms");
    }
    value
}
