//! Core of the verdict harness: parse tagged completions, run the extracted
//! program in a sandboxed interpreter, score it and aggregate pass@k.

pub mod answer;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod parser;
pub mod reward;
pub mod sandbox;
pub mod scalar;

use num_rational::{BigRational, Rational64};

pub use answer::{compare_answers, normalize_answer, AnswerValue};
pub use corpus::{
    extract_final_answer, load_gsm8k, load_gsm_symbolic, load_rosetta, render_prompt, DatasetId,
    Problem, PromptMode, PromptSpec, RosettaTask, Source, Split, TestCase,
};
pub use error::{CorpusError, MetricsError, SandboxError};
pub use metrics::{build_report, pass_at_k, pass_hat_k, EvalMeta, EvalReport, OutcomeMatrix};
pub use parser::{
    count_required_tags, detect_strict, extract_soft, parse, Completion, ParsedCompletion,
    StructuralReport,
};
pub use reward::{
    correctness_reward, group_advantages, length_reward, score_candidate, soft_format_reward,
    strict_format_reward, total_reward, xmlcount_reward, CandidateScore, GroupScore,
    LengthRewardConfig, RewardBreakdown, TokenCounter, WhitespaceCounter,
};
pub use sandbox::{
    execute, register_backend, Backend, BackendId, ExecutionOutcome, InterpreterBackend,
    OutcomeKind, Sandbox, SandboxLimits,
};
pub use scalar::Score;

/// Reward breakdown in machine floats.
pub type Breakdown = RewardBreakdown<f64>;
/// Reward breakdown in single precision, for trainers that keep f32 buffers.
pub type Breakdown32 = RewardBreakdown<f32>;
/// Reward breakdown carried as exact rationals.
pub type ExactBreakdown = RewardBreakdown<Rational64>;
/// Reward breakdown with unbounded rationals.
pub type BigBreakdown = RewardBreakdown<BigRational>;
