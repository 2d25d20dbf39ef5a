//! pass@k, pass^k and evaluation reports.

use std::collections::BTreeMap;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::corpus::PromptMode;
use crate::error::MetricsError;
use crate::reward::CandidateScore;
use crate::sandbox::OutcomeKind;
use crate::scalar::Score;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Cell (i, j) is true when candidate j of problem i executed to the right answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeMatrix {
    k: usize,
    cells: Vec<Vec<bool>>,
}

impl OutcomeMatrix {
    /// Rejects ragged rows. An empty matrix is allowed here and rejected by
    /// the metrics.
    pub fn new(cells: Vec<Vec<bool>>) -> Result<Self, MetricsError> {
        let k = cells.first().map(Vec::len).unwrap_or(0);
        if let Some((i, row)) = cells.iter().enumerate().find(|(_, r)| r.len() != k) {
            return Err(MetricsError::ShapeMismatch {
                problem: i.to_string(),
                expected: k,
                found: row.len(),
            });
        }
        Ok(Self { k, cells })
    }

    pub fn n_problems(&self) -> usize {
        self.cells.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.cells
    }

    fn fraction(&self, row_ok: impl Fn(&[bool]) -> bool) -> Result<Rational64, MetricsError> {
        if self.cells.is_empty() {
            return Err(MetricsError::EmptyMatrix);
        }
        let hits = self.cells.iter().filter(|r| row_ok(r)).count();
        Ok(Rational64::new(hits as i64, self.cells.len() as i64))
    }
}

pub fn pass_at_k_exact(m: &OutcomeMatrix) -> Result<Rational64, MetricsError> {
    m.fraction(|row| row.iter().any(|&c| c))
}

pub fn pass_hat_k_exact(m: &OutcomeMatrix) -> Result<Rational64, MetricsError> {
    m.fraction(|row| !row.is_empty() && row.iter().all(|&c| c))
}

/// Fraction of problems with at least one correct candidate.
pub fn pass_at_k(m: &OutcomeMatrix) -> Result<f64, MetricsError> {
    pass_at_k_exact(m).map(|r| Score::to_f64(&r))
}

/// Fraction of problems whose candidates are all correct.
pub fn pass_hat_k(m: &OutcomeMatrix) -> Result<f64, MetricsError> {
    pass_hat_k_exact(m).map(|r| Score::to_f64(&r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMeta {
    pub dataset_id: String,
    pub prompt_mode: PromptMode,
    pub checkpoint_label: String,
    pub k: usize,
}

/// Candidates scored for one problem. `padded` counts trailing slots that
/// were filled in because the generation file had fewer than k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemResults<S> {
    pub problem_id: String,
    pub candidates: Vec<CandidateScore<S>>,
    #[serde(default)]
    pub padded: usize,
}

/// Mean of each reward component over a set of candidates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub xmlcount: f64,
    pub strict_format: f64,
    pub soft_format: f64,
    pub correctness: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    pub total: f64,
    pub mean_reasoning_tokens: f64,
    pub outcomes: BTreeMap<String, usize>,
}

impl ComponentStats {
    pub fn of<'a, S: Score>(candidates: impl IntoIterator<Item = &'a CandidateScore<S>>) -> Self {
        let mut stats = ComponentStats::default();
        let mut length_sum = 0.0;
        let mut any_length = false;
        let mut n = 0usize;
        for c in candidates {
            let b = &c.breakdown;
            n += 1;
            stats.xmlcount += b.xmlcount.to_f64();
            stats.strict_format += b.strict_format.to_f64();
            stats.soft_format += b.soft_format.to_f64();
            stats.correctness += b.correctness.to_f64();
            stats.total += b.total.to_f64();
            if let Some(l) = &b.length {
                any_length = true;
                length_sum += l.to_f64();
            }
            stats.mean_reasoning_tokens += c.reasoning_tokens as f64;
            *stats.outcomes.entry(c.outcome.kind.to_string()).or_default() += 1;
        }
        if n > 0 {
            let n = n as f64;
            stats.xmlcount /= n;
            stats.strict_format /= n;
            stats.soft_format /= n;
            stats.correctness /= n;
            stats.total /= n;
            stats.mean_reasoning_tokens /= n;
            if any_length {
                stats.length = Some(length_sum / n);
            }
        }
        stats
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSummary {
    pub problem_id: String,
    pub solved_any: bool,
    pub solved_all: bool,
    pub correct: usize,
    pub padded: usize,
    pub component_stats: ComponentStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub dataset_id: String,
    pub prompt_mode: PromptMode,
    pub checkpoint_label: String,
    pub k: usize,
    pub n_problems: usize,
    pub pass_at_k: f64,
    pub pass_hat_k: f64,
    /// Numerators of the two metrics; both share the denominator n_problems.
    pub solved_any_count: usize,
    pub solved_all_count: usize,
    pub mean_reasoning_tokens: f64,
    pub component_stats: ComponentStats,
    pub per_problem: Vec<ProblemSummary>,
}

fn is_correct<S>(c: &CandidateScore<S>) -> bool {
    c.outcome.kind == OutcomeKind::Success
}

pub fn build_report<S: Score>(
    results: &[ProblemResults<S>],
    meta: &EvalMeta,
) -> Result<EvalReport, MetricsError> {
    for r in results {
        if r.candidates.len() != meta.k {
            return Err(MetricsError::ShapeMismatch {
                problem: r.problem_id.clone(),
                expected: meta.k,
                found: r.candidates.len(),
            });
        }
    }
    let matrix = OutcomeMatrix::new(
        results
            .iter()
            .map(|r| r.candidates.iter().map(is_correct).collect())
            .collect(),
    )?;
    let at_k = pass_at_k_exact(&matrix)?;
    let hat_k = pass_hat_k_exact(&matrix)?;
    let per_problem: Vec<ProblemSummary> = results
        .iter()
        .zip(matrix.rows())
        .map(|(r, row)| ProblemSummary {
            problem_id: r.problem_id.clone(),
            solved_any: row.iter().any(|&c| c),
            solved_all: row.iter().all(|&c| c),
            correct: row.iter().filter(|&&c| c).count(),
            padded: r.padded,
            component_stats: ComponentStats::of(&r.candidates),
        })
        .collect();
    let overall = ComponentStats::of(results.iter().flat_map(|r| &r.candidates));
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        dataset_id: meta.dataset_id.clone(),
        prompt_mode: meta.prompt_mode,
        checkpoint_label: meta.checkpoint_label.clone(),
        k: meta.k,
        n_problems: results.len(),
        pass_at_k: Score::to_f64(&at_k),
        pass_hat_k: Score::to_f64(&hat_k),
        solved_any_count: per_problem.iter().filter(|p| p.solved_any).count(),
        solved_all_count: per_problem.iter().filter(|p| p.solved_all).count(),
        mean_reasoning_tokens: overall.mean_reasoning_tokens,
        component_stats: overall,
        per_problem,
    })
}
