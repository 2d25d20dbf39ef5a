//! Validated configuration plus probed backends and the shared sandbox pool.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use verdict_core::metrics::{build_report, ComponentStats, EvalMeta, ProblemResults};
use verdict_core::reward::{score_candidate_in, score_group, CandidateScore};
use verdict_core::sandbox::{default_workers, BackendRegistry, ProbeReport};
use verdict_core::{
    Backend, BackendId, Completion, DatasetId, EvalReport, LengthRewardConfig, MetricsError, OutcomeKind,
    Problem, Sandbox, SandboxLimits,
};

use crate::config::HarnessConfig;
use crate::error::HarnessError;
use crate::log::ScoreLog;
use crate::wire::{
    EvaluateRequest, LogEntry, ResolvedFlags, ScoreFlags, ScoreRequest, ScoreResponse, WIRE_SCHEMA_VERSION,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendHealth {
    pub backend: BackendId,
    pub available: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub schema_version: u32,
    /// "ok" when every configured backend answered its probe.
    pub status: String,
    pub workers: usize,
    pub wall_timeout_ms: u64,
    pub backends: Vec<BackendHealth>,
}

/// Everything needed to run an evaluation, checked up front.
#[derive(Debug)]
pub struct EvalPlan {
    pub meta: EvalMeta,
    pub backend: Backend,
    pub length: LengthRewardConfig,
    pub problems: Vec<PlannedProblem>,
}

#[derive(Debug)]
pub struct PlannedProblem {
    pub problem: Problem,
    pub completions: Vec<Completion>,
    pub padded: usize,
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub report: EvalReport,
    pub json_path: PathBuf,
    pub csv_path: PathBuf,
}

#[derive(Debug)]
pub struct Harness {
    config: HarnessConfig,
    registry: BackendRegistry,
    failures: BTreeMap<BackendId, String>,
    sandbox: Sandbox,
    limits: SandboxLimits,
    log: Option<ScoreLog>,
}

impl Harness {
    /// Validates `config` and probes every configured backend. A backend that
    /// fails its probe is recorded, not fatal; requests for it get
    /// `BackendUnavailable`.
    pub fn new(config: HarnessConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let registry = BackendRegistry::new();
        let mut failures = BTreeMap::new();
        for b in &config.backends {
            let registered = b
                .resolve()
                .and_then(|spec| registry.register(spec).map_err(|e| e.to_string()));
            if let Err(msg) = registered {
                failures.insert(b.id, msg);
            }
        }
        let sandbox = Sandbox::new(config.workers.unwrap_or_else(default_workers), config.sandbox.root());
        let log = config.score_log.as_ref().map(ScoreLog::open).transpose()?;
        Ok(Self {
            limits: config.sandbox.limits(),
            config,
            registry,
            failures,
            sandbox,
            log,
        })
    }

    pub fn config(&self) -> &HarnessConfig {
        &self.config
    }

    pub fn sandbox(&self) -> &Sandbox {
        &self.sandbox
    }

    pub fn limits(&self) -> &SandboxLimits {
        &self.limits
    }

    pub fn backend(&self, id: BackendId) -> Result<Backend, HarnessError> {
        if let Some(backend) = self.registry.get(id) {
            return Ok(backend);
        }
        Err(HarnessError::BackendUnavailable(
            self.failures
                .get(&id)
                .cloned()
                .unwrap_or_else(|| format!("{} is not configured", id)),
        ))
    }

    pub fn health(&self) -> Health {
        let mut backends: Vec<BackendHealth> = self
            .registry
            .probes()
            .into_iter()
            .map(|probe| BackendHealth {
                backend: probe.backend,
                available: true,
                probe: Some(probe),
                error: None,
            })
            .collect();
        backends.extend(self.failures.iter().map(|(id, msg)| BackendHealth {
            backend: *id,
            available: false,
            probe: None,
            error: Some(msg.clone()),
        }));
        backends.sort_by_key(|b| b.backend);
        Health {
            schema_version: WIRE_SCHEMA_VERSION,
            status: if self.failures.is_empty() { "ok" } else { "degraded" }.into(),
            workers: self.sandbox.pool().capacity(),
            wall_timeout_ms: self.limits.wall_timeout.as_millis() as u64,
            backends,
        }
    }

    pub fn length_config(&self, enabled: Option<bool>) -> LengthRewardConfig {
        let mut cfg = self.config.length_reward.clone();
        if let Some(on) = enabled {
            cfg.enabled = on;
        }
        cfg
    }

    /// Scores the group and appends it to the score log when one is configured.
    pub fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse, HarnessError> {
        let response = self.score_unlogged(req)?;
        if let Some(log) = &self.log {
            let mut request = req.clone();
            request.flags = ScoreFlags {
                length_reward: Some(response.flags.length_reward),
                regime: response.flags.regime.clone(),
            };
            let entry = LogEntry {
                schema_version: WIRE_SCHEMA_VERSION,
                logged_at_ms: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_millis() as u64)
                    .unwrap_or(0),
                request,
                response: response.clone(),
            };
            // the score is still good; a lost log line only weakens replay
            if let Err(e) = log.append(&entry) {
                eprintln!("warning: could not append to {}: {}", log.path().display(), e);
            }
        }
        Ok(response)
    }

    pub fn score_unlogged(&self, req: &ScoreRequest) -> Result<ScoreResponse, HarnessError> {
        if req.schema_version != WIRE_SCHEMA_VERSION {
            return Err(HarnessError::BadRequest(format!(
                "unsupported schema_version {}, expected {}",
                req.schema_version, WIRE_SCHEMA_VERSION
            )));
        }
        if req.completions.is_empty() {
            return Err(HarnessError::Invalid("empty group: at least one completion is required".into()));
        }
        if let Some(g) = self.config.group_size {
            if req.completions.len() != g {
                return Err(HarnessError::Invalid(format!(
                    "group has {} completions, configured group size is {}",
                    req.completions.len(),
                    g
                )));
            }
        }
        if req.problem_id.trim().is_empty() {
            return Err(HarnessError::Invalid("problem_id must not be empty".into()));
        }
        let backend = self.backend(req.backend)?;
        let length = self.length_config(req.flags.length_reward);
        let mut problem = Problem::new(
            req.problem_id.clone(),
            req.question.clone().unwrap_or_default(),
            req.ground_truth.clone(),
        );
        problem.test_cases = req.test_cases.clone();
        let completions: Vec<Completion> = req.completions.iter().cloned().map(Completion::new).collect();
        let group = score_group::<f64>(&self.sandbox, &completions, &problem, &backend, &self.limits, &length)?;
        Ok(ScoreResponse {
            schema_version: WIRE_SCHEMA_VERSION,
            problem_id: req.problem_id.clone(),
            backend: req.backend,
            group_size: group.group_size,
            flags: ResolvedFlags {
                length_reward: length.enabled,
                regime: req.flags.regime.clone(),
            },
            totals: group.rewards,
            advantages: group.advantages,
            breakdowns: group.breakdowns,
            outcomes: group.candidates.iter().map(|c| c.outcome.kind).collect(),
            answers: group.candidates.iter().map(|c| c.outcome.value.clone()).collect(),
            reasoning_tokens: group.candidates.iter().map(|c| c.reasoning_tokens).collect(),
            wall_times_ms: group
                .candidates
                .iter()
                .map(|c| c.outcome.wall_time.as_secs_f64() * 1000.0)
                .collect(),
        })
    }

    /// Checks an evaluation request against the dataset without running
    /// anything.
    pub fn plan_evaluation(&self, req: &EvaluateRequest) -> Result<EvalPlan, HarnessError> {
        if req.schema_version != WIRE_SCHEMA_VERSION {
            return Err(HarnessError::BadRequest(format!(
                "unsupported schema_version {}, expected {}",
                req.schema_version, WIRE_SCHEMA_VERSION
            )));
        }
        let dataset: DatasetId = req
            .dataset_id
            .parse()
            .map_err(|e: verdict_core::CorpusError| HarnessError::BadRequest(e.to_string()))?;
        check_label(&req.checkpoint_label)?;
        if req.k == 0 {
            return Err(HarnessError::Invalid("k must be positive".into()));
        }
        let path = self.config.dataset_path(dataset).ok_or_else(|| {
            HarnessError::BadRequest(format!("no path configured for dataset {}", dataset))
        })?;
        let backend = self.backend(req.backend)?;
        let problems = dataset.load(&path)?;

        let mut by_id: HashMap<&str, &[String]> = HashMap::new();
        for g in &req.generations {
            if by_id.insert(&g.problem_id, &g.completions).is_some() {
                return Err(HarnessError::BadRequest(format!(
                    "problem {} appears twice in the generations",
                    g.problem_id
                )));
            }
        }
        let known: std::collections::HashSet<&str> = problems.iter().map(|p| p.id.as_str()).collect();
        if let Some(stray) = req.generations.iter().find(|g| !known.contains(g.problem_id.as_str())) {
            return Err(HarnessError::BadRequest(format!(
                "generations name problem {} which is not in {}",
                stray.problem_id, dataset
            )));
        }

        let mut planned = Vec::with_capacity(problems.len());
        for problem in problems {
            let texts = by_id.get(problem.id.as_str()).copied().unwrap_or(&[]);
            let found = texts.len();
            if found > req.k || (found < req.k && !req.pad) {
                return Err(MetricsError::ShapeMismatch {
                    problem: problem.id.clone(),
                    expected: req.k,
                    found,
                }
                .into());
            }
            let mut completions: Vec<Completion> = texts.iter().cloned().map(Completion::new).collect();
            // an empty completion scores as unextractable: -0.5
            completions.resize_with(req.k, || Completion::new(String::new()));
            planned.push(PlannedProblem {
                problem,
                completions,
                padded: req.k - found,
            });
        }
        Ok(EvalPlan {
            meta: EvalMeta {
                dataset_id: dataset.as_str().to_string(),
                prompt_mode: req.prompt_mode,
                checkpoint_label: req.checkpoint_label.clone(),
                k: req.k,
            },
            backend,
            length: self.length_config(req.length_reward),
            problems: planned,
        })
    }

    /// Scores every candidate of the plan on the shared pool, then writes
    /// `report.json` and `report.csv` under
    /// `{report_dir}/{dataset}/{prompt_mode}/{checkpoint}/`.
    pub fn run_evaluation(&self, plan: &EvalPlan) -> Result<EvalOutput, HarnessError> {
        let results = self.score_plan(plan)?;
        let report = build_report(&results, &plan.meta)?;
        let dir = self
            .config
            .report_dir
            .join(&plan.meta.dataset_id)
            .join(plan.meta.prompt_mode.as_str())
            .join(&plan.meta.checkpoint_label);
        std::fs::create_dir_all(&dir)?;
        let json_path = dir.join("report.json");
        let csv_path = dir.join("report.csv");
        let mut json = serde_json::to_string_pretty(&report).map_err(std::io::Error::other)?;
        json.push('\n');
        std::fs::write(&json_path, json)?;
        write_csv(&csv_path, &report)?;
        Ok(EvalOutput {
            report,
            json_path,
            csv_path,
        })
    }

    pub fn evaluate(&self, req: &EvaluateRequest) -> Result<EvalOutput, HarnessError> {
        let plan = self.plan_evaluation(req)?;
        self.run_evaluation(&plan)
    }

    fn score_plan(&self, plan: &EvalPlan) -> Result<Vec<ProblemResults<f64>>, HarnessError> {
        let jobs: Vec<(usize, usize)> = plan
            .problems
            .iter()
            .enumerate()
            .flat_map(|(p, planned)| (0..planned.completions.len()).map(move |c| (p, c)))
            .collect();
        let slots: Mutex<Vec<Option<CandidateScore<f64>>>> = Mutex::new(vec![None; jobs.len()]);
        let failure: Mutex<Option<HarnessError>> = Mutex::new(None);
        let next = AtomicUsize::new(0);
        let stop = AtomicBool::new(false);
        let threads = self.sandbox.pool().capacity().clamp(1, jobs.len().max(1));
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= jobs.len() || stop.load(Ordering::Relaxed) {
                        break;
                    }
                    let (p, c) = jobs[i];
                    let planned = &plan.problems[p];
                    match score_candidate_in(
                        &self.sandbox,
                        &planned.completions[c],
                        &planned.problem,
                        &plan.backend,
                        &self.limits,
                        &plan.length,
                    ) {
                        Ok(score) => slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(score),
                        Err(e) => {
                            stop.store(true, Ordering::Relaxed);
                            failure.lock().unwrap_or_else(|e| e.into_inner()).get_or_insert(e.into());
                        }
                    }
                });
            }
        });
        if let Some(e) = failure.into_inner().unwrap_or_else(|e| e.into_inner()) {
            return Err(e);
        }
        let mut scores = slots
            .into_inner()
            .unwrap_or_else(|e| e.into_inner())
            .into_iter()
            .map(|s| s.expect("every job scored"));
        Ok(plan
            .problems
            .iter()
            .map(|planned| ProblemResults {
                problem_id: planned.problem.id.clone(),
                candidates: scores.by_ref().take(planned.completions.len()).collect(),
                padded: planned.padded,
            })
            .collect())
    }
}

/// Labels become directory names, so only a plain path segment is accepted.
fn check_label(label: &str) -> Result<(), HarnessError> {
    let plain = !label.is_empty()
        && label.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && label.chars().any(|c| c != '.');
    if plain {
        Ok(())
    } else {
        Err(HarnessError::BadRequest(format!(
            "checkpoint label {:?} must be letters, digits, '-', '_' or '.'",
            label
        )))
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    problem_id: &'a str,
    solved_any: bool,
    solved_all: bool,
    correct: usize,
    k: usize,
    padded: usize,
    mean_total: f64,
    mean_correctness: f64,
    mean_xmlcount: f64,
    mean_strict_format: f64,
    mean_soft_format: f64,
    mean_length: Option<f64>,
    mean_reasoning_tokens: f64,
    success: usize,
    logical_mismatch: usize,
    syntax_error: usize,
    timeout: usize,
    no_output: usize,
}

fn write_csv(path: &std::path::Path, report: &EvalReport) -> Result<(), HarnessError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_error)?;
    for p in &report.per_problem {
        let s: &ComponentStats = &p.component_stats;
        let count = |kind: OutcomeKind| s.outcomes.get(kind.as_str()).copied().unwrap_or(0);
        writer
            .serialize(CsvRow {
                problem_id: &p.problem_id,
                solved_any: p.solved_any,
                solved_all: p.solved_all,
                correct: p.correct,
                k: report.k,
                padded: p.padded,
                mean_total: s.total,
                mean_correctness: s.correctness,
                mean_xmlcount: s.xmlcount,
                mean_strict_format: s.strict_format,
                mean_soft_format: s.soft_format,
                mean_length: s.length,
                mean_reasoning_tokens: s.mean_reasoning_tokens,
                success: count(OutcomeKind::Success),
                logical_mismatch: count(OutcomeKind::LogicalMismatch),
                syntax_error: count(OutcomeKind::SyntaxError),
                timeout: count(OutcomeKind::Timeout),
                no_output: count(OutcomeKind::NoOutput),
            })
            .map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> HarnessError {
    HarnessError::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_must_be_plain_segments() {
        for ok in ["base", "500", "step-1000", "v1.2_rc"] {
            check_label(ok).unwrap();
        }
        for bad in ["", ".", "..", "a/b", "../x", "has space"] {
            assert!(check_label(bad).is_err(), "{:?}", bad);
        }
    }
}
