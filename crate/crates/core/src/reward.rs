//! Reward components, their exact totals and group-relative advantages.

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{Float, FromPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::answer::{compare_answers, AnswerValue};
use crate::corpus::Problem;
use crate::error::SandboxError;
use crate::parser::{parse, Completion, ParsedCompletion, StructuralReport};
use crate::sandbox::{Backend, ExecutionOutcome, OutcomeKind, Sandbox, SandboxLimits};
use crate::scalar::{decimal_of_f64, Score};

/// Below this population standard deviation a group counts as uniform.
pub const ZERO_VARIANCE: f64 = 1e-12;

pub trait TokenCounter: Send + Sync {
    fn name(&self) -> &str;
    fn count(&self, text: &str) -> usize;
}

/// Counts maximal runs of non-whitespace.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn name(&self) -> &str {
        "whitespace"
    }

    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

/// Built-in counter for a configured identifier.
pub fn builtin_counter(name: &str) -> Option<&'static dyn TokenCounter> {
    match name {
        "whitespace" => Some(&WhitespaceCounter),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LengthRewardConfig {
    pub scale: f64,
    pub lower: f64,
    pub upper: f64,
    pub enabled: bool,
    pub counter: String,
}

impl Default for LengthRewardConfig {
    fn default() -> Self {
        Self {
            scale: 1e-4,
            lower: 0.009,
            upper: 0.013,
            enabled: false,
            counter: "whitespace".into(),
        }
    }
}

impl LengthRewardConfig {
    pub fn enabled() -> Self {
        Self {
            enabled: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let exact = |v: f64, what: &str| decimal_of_f64(v).ok_or(format!("length {} must be finite", what));
        let (scale, lower, upper) = (exact(self.scale, "scale")?, exact(self.lower, "lower")?, exact(self.upper, "upper")?);
        if scale <= BigRational::zero() {
            return Err("length scale must be positive".into());
        }
        if lower >= upper {
            return Err("length lower bound must be below the upper bound".into());
        }
        if builtin_counter(&self.counter).is_none() {
            return Err(format!("unknown token counter {:?}", self.counter));
        }
        Ok(())
    }

    /// Whether `tokens` falls strictly inside the window, decided exactly
    /// from the decimal forms of the configured constants.
    pub fn in_window(&self, tokens: usize) -> bool {
        let (Some(scale), Some(lower), Some(upper)) = (
            decimal_of_f64(self.scale),
            decimal_of_f64(self.lower),
            decimal_of_f64(self.upper),
        ) else {
            return false;
        };
        let scaled = scale * BigRational::from_integer(BigInt::from(tokens));
        lower < scaled && scaled < upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown<S> {
    pub xmlcount: S,
    pub strict_format: S,
    pub soft_format: S,
    pub correctness: S,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<S>,
    pub total: S,
}

impl<S: Score> RewardBreakdown<S> {
    pub fn components(&self) -> impl Iterator<Item = &S> {
        [&self.xmlcount, &self.strict_format, &self.soft_format, &self.correctness]
            .into_iter()
            .chain(self.length.as_ref())
    }
}

impl RewardBreakdown<Rational64> {
    /// Rounds each component, and the exact total, into `S`.
    pub fn convert<S: Score>(&self) -> RewardBreakdown<S> {
        RewardBreakdown {
            xmlcount: S::from_rational(&self.xmlcount),
            strict_format: S::from_rational(&self.strict_format),
            soft_format: S::from_rational(&self.soft_format),
            correctness: S::from_rational(&self.correctness),
            length: self.length.as_ref().map(S::from_rational),
            total: S::from_rational(&self.total),
        }
    }
}

pub fn xmlcount_reward<S: Score>(report: &StructuralReport) -> S {
    let tags = S::from_ratio(report.required_tag_count.min(5) as i64, 8);
    if report.query_nested_in_code {
        tags - S::from_ratio(1, 2)
    } else {
        tags
    }
}

pub fn strict_format_reward<S: Score>(strict_match: bool) -> S {
    if strict_match {
        S::from_ratio(1, 2)
    } else {
        S::zero()
    }
}

pub fn soft_format_reward<S: Score>(soft_extractable: bool) -> S {
    if soft_extractable {
        S::from_ratio(1, 2)
    } else {
        S::zero()
    }
}

pub fn correctness_reward<S: Score>(outcome: &ExecutionOutcome, truth: &AnswerValue) -> S {
    match outcome.kind {
        OutcomeKind::Success => match &outcome.value {
            Some(value) if compare_answers(value, truth) => S::one(),
            _ => -S::one(),
        },
        OutcomeKind::LogicalMismatch => -S::one(),
        OutcomeKind::SyntaxError => S::from_ratio(-1, 2),
        OutcomeKind::Timeout | OutcomeKind::NoOutput => S::from_ratio(-1, 10),
    }
}

pub fn length_reward<S: Score>(reasoning: &str, cfg: &LengthRewardConfig) -> S {
    let counter = builtin_counter(&cfg.counter).unwrap_or(&WhitespaceCounter);
    length_reward_with(reasoning, cfg, counter)
}

pub fn length_reward_with<S: Score>(
    reasoning: &str,
    cfg: &LengthRewardConfig,
    counter: &dyn TokenCounter,
) -> S {
    if cfg.in_window(counter.count(reasoning)) {
        S::one()
    } else {
        S::zero()
    }
}

/// Sums the enabled components and stores the result in `total`.
pub fn total_reward<S: Score>(breakdown: &mut RewardBreakdown<S>) -> S {
    let total = breakdown
        .components()
        .fold(S::zero(), |acc, c| acc + c.clone());
    breakdown.total = total.clone();
    total
}

/// Rewards for an already parsed completion and its execution outcome.
/// Components are combined exactly and rounded once into `S`.
pub fn score_parsed<S: Score>(
    parsed: &ParsedCompletion,
    outcome: &ExecutionOutcome,
    truth: &AnswerValue,
    cfg: &LengthRewardConfig,
) -> RewardBreakdown<S> {
    let report = &parsed.report;
    let mut exact = RewardBreakdown::<Rational64> {
        xmlcount: xmlcount_reward(report),
        strict_format: strict_format_reward(report.strict_match),
        soft_format: soft_format_reward(report.soft_extractable),
        correctness: correctness_reward(outcome, truth),
        length: cfg
            .enabled
            .then(|| length_reward(parsed.reasoning.as_deref().unwrap_or(""), cfg)),
        total: Rational64::zero(),
    };
    total_reward(&mut exact);
    exact.convert()
}

/// Everything known about one scored candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore<S> {
    pub breakdown: RewardBreakdown<S>,
    pub outcome: ExecutionOutcome,
    pub report: StructuralReport,
    pub reasoning_tokens: usize,
}

/// Runs the extracted program against the problem. Problems with test cases
/// pass only if every case does; otherwise the first failing case decides.
pub fn run_problem(
    sandbox: &Sandbox,
    parsed: &ParsedCompletion,
    problem: &Problem,
    backend: &Backend,
    limits: &SandboxLimits,
) -> Result<ExecutionOutcome, SandboxError> {
    let (Some(code), Some(query)) = (&parsed.code, &parsed.query) else {
        return Ok(ExecutionOutcome::without_value(
            OutcomeKind::SyntaxError,
            "no extractable code and query",
        ));
    };
    if problem.test_cases.is_empty() {
        return Ok(sandbox
            .execute(code, query, backend, limits)?
            .judge(&problem.ground_truth));
    }
    let mut first_pass = None;
    let mut elapsed = std::time::Duration::ZERO;
    for case in &problem.test_cases {
        let mut outcome = sandbox.execute(code, &case.query, backend, limits)?.judge(&case.expected);
        elapsed += outcome.wall_time;
        if outcome.kind != OutcomeKind::Success {
            outcome.wall_time = elapsed;
            return Ok(outcome);
        }
        first_pass.get_or_insert(outcome);
    }
    let mut outcome = first_pass.expect("at least one test case");
    outcome.wall_time = elapsed;
    Ok(outcome)
}

/// Truth a candidate's outcome is compared against when scoring.
fn scoring_truth(problem: &Problem) -> &AnswerValue {
    problem
        .test_cases
        .first()
        .map(|c| &c.expected)
        .unwrap_or(&problem.ground_truth)
}

pub fn score_candidate_in<S: Score>(
    sandbox: &Sandbox,
    completion: &Completion,
    problem: &Problem,
    backend: &Backend,
    limits: &SandboxLimits,
    cfg: &LengthRewardConfig,
) -> Result<CandidateScore<S>, SandboxError> {
    let parsed = parse(completion);
    let outcome = run_problem(sandbox, &parsed, problem, backend, limits)?;
    let breakdown = score_parsed(&parsed, &outcome, scoring_truth(problem), cfg);
    let counter = builtin_counter(&cfg.counter).unwrap_or(&WhitespaceCounter);
    Ok(CandidateScore {
        breakdown,
        reasoning_tokens: counter.count(parsed.reasoning.as_deref().unwrap_or("")),
        outcome,
        report: parsed.report,
    })
}

/// parse, execute, score; on the process-wide sandbox.
pub fn score_candidate<S: Score>(
    completion: &Completion,
    problem: &Problem,
    backend: &Backend,
    limits: &SandboxLimits,
    cfg: &LengthRewardConfig,
) -> Result<CandidateScore<S>, SandboxError> {
    score_candidate_in(Sandbox::global(), completion, problem, backend, limits, cfg)
}

/// (r - mean) / population std, or all zeros for a uniform group.
pub fn group_advantages<F: Float + FromPrimitive>(rewards: &[F]) -> Vec<F> {
    if rewards.is_empty() {
        return Vec::new();
    }
    // a uniform group can still show a rounding-sized spread around its mean
    if rewards.iter().all(|&r| r == rewards[0]) {
        return vec![F::zero(); rewards.len()];
    }
    let n = F::from_usize(rewards.len()).expect("group size fits the float type");
    let mean = rewards.iter().fold(F::zero(), |acc, &r| acc + r) / n;
    let variance = rewards
        .iter()
        .fold(F::zero(), |acc, &r| acc + (r - mean) * (r - mean))
        / n;
    let std = variance.sqrt();
    if std < F::from_f64(ZERO_VARIANCE).expect("threshold fits the float type") {
        return vec![F::zero(); rewards.len()];
    }
    rewards.iter().map(|&r| (r - mean) / std).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore<S> {
    pub group_size: usize,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub breakdowns: Vec<RewardBreakdown<S>>,
    pub candidates: Vec<CandidateScore<S>>,
}

/// Scores every candidate of a group concurrently (bounded by the sandbox
/// pool) and normalizes their totals into advantages.
pub fn score_group<S: Score>(
    sandbox: &Sandbox,
    completions: &[Completion],
    problem: &Problem,
    backend: &Backend,
    limits: &SandboxLimits,
    cfg: &LengthRewardConfig,
) -> Result<GroupScore<S>, SandboxError> {
    let results: Vec<Result<CandidateScore<S>, SandboxError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = completions
            .iter()
            .map(|c| scope.spawn(move || score_candidate_in(sandbox, c, problem, backend, limits, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scoring thread panicked"))
            .collect()
    });
    let candidates = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(GroupScore::from_candidates(candidates))
}

impl<S: Score> GroupScore<S> {
    pub fn from_candidates(candidates: Vec<CandidateScore<S>>) -> Self {
        let rewards: Vec<f64> = candidates.iter().map(|c| c.breakdown.total.to_f64()).collect();
        Self {
            group_size: candidates.len(),
            advantages: group_advantages(&rewards),
            breakdowns: candidates.iter().map(|c| c.breakdown.clone()).collect(),
            rewards,
            candidates,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_text;

    fn report(count: u8, nested: bool) -> StructuralReport {
        StructuralReport {
            required_tag_count: count,
            query_nested_in_code: nested,
            ..Default::default()
        }
    }

    #[test]
    fn xmlcount_examples() {
        assert_eq!(xmlcount_reward::<f64>(&report(5, false)), 0.625);
        assert_eq!(xmlcount_reward::<f64>(&report(0, true)), -0.5);
        assert_eq!(xmlcount_reward::<f64>(&report(2, false)), 0.25);
    }

    #[test]
    fn length_examples() {
        let cfg = LengthRewardConfig::enabled();
        let words = |n: usize| vec!["w"; n].join(" ");
        assert_eq!(length_reward::<f64>(&words(100), &cfg), 1.0);
        assert_eq!(length_reward::<f64>(&words(90), &cfg), 0.0);
        assert_eq!(length_reward::<f64>("", &cfg), 0.0);
    }

    #[test]
    fn totals_are_exact_sums() {
        let parsed = parse_text("");
        let outcome = ExecutionOutcome::without_value(OutcomeKind::SyntaxError, "");
        let b: RewardBreakdown<Rational64> =
            score_parsed(&parsed, &outcome, &1.into(), &LengthRewardConfig::default());
        assert_eq!(b.total, Rational64::new(-1, 2));
        let mut zero = RewardBreakdown {
            xmlcount: 0.0,
            strict_format: 0.0,
            soft_format: 0.0,
            correctness: 0.0,
            length: None,
            total: 9.0,
        };
        assert_eq!(total_reward(&mut zero), 0.0);
    }

    #[test]
    fn advantage_examples() {
        assert_eq!(group_advantages(&[1.0, 1.0, 1.0, 1.0]), vec![0.0; 4]);
        assert_eq!(group_advantages(&[2.0, 0.0]), vec![1.0, -1.0]);
        assert_eq!(group_advantages(&[3.0f32]), vec![0.0]);
    }
}
