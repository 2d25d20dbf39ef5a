mod common;

use std::collections::HashMap;
use std::path::PathBuf;

use serde::Deserialize;
use verdict_core::metrics::{build_report, EvalMeta, ProblemResults};
use verdict_core::reward::score_candidate_in;
use verdict_core::{load_gsm8k, Completion, LengthRewardConfig, MetricsError, PromptMode, SandboxLimits};

#[derive(Deserialize)]
struct Generation {
    problem_id: String,
    completions: Vec<String>,
}

#[derive(Deserialize)]
struct Expected {
    dataset_id: String,
    k: usize,
    n_problems: usize,
    pass_at_k: f64,
    pass_hat_k: f64,
    solved_any_count: usize,
    solved_all_count: usize,
    mean_reasoning_tokens: f64,
    outcomes: HashMap<String, Vec<String>>,
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/eval5").join(name)
}

fn scored() -> Vec<ProblemResults<f64>> {
    let problems = load_gsm8k(fixture("problems.jsonl")).unwrap();
    let generations: Vec<Generation> = std::fs::read_to_string(fixture("generations.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let (sandbox, _root) = common::sandbox(8);
    let backend = common::prolog();
    problems
        .iter()
        .map(|problem| {
            let generation = generations.iter().find(|g| g.problem_id == problem.id).unwrap();
            let candidates = generation
                .completions
                .iter()
                .map(|text| {
                    score_candidate_in(
                        &sandbox,
                        &Completion::new(text.clone()),
                        problem,
                        &backend,
                        &SandboxLimits::default(),
                        &LengthRewardConfig::default(),
                    )
                    .unwrap()
                })
                .collect();
            ProblemResults {
                problem_id: problem.id.clone(),
                candidates,
                padded: 0,
            }
        })
        .collect()
}

#[test]
fn five_problem_fixture_matches_hand_computed_metrics() {
    let expected: Expected =
        serde_json::from_str(&std::fs::read_to_string(fixture("expected.json")).unwrap()).unwrap();
    let results = scored();
    for r in &results {
        let kinds: Vec<String> = r.candidates.iter().map(|c| c.outcome.kind.to_string()).collect();
        assert_eq!(kinds, expected.outcomes[&r.problem_id], "{}", r.problem_id);
    }
    let meta = EvalMeta {
        dataset_id: expected.dataset_id.clone(),
        prompt_mode: PromptMode::OneShot,
        checkpoint_label: "fixture".into(),
        k: expected.k,
    };
    let report = build_report(&results, &meta).unwrap();
    assert_eq!(report.n_problems, expected.n_problems);
    assert_eq!(report.pass_at_k, expected.pass_at_k);
    assert_eq!(report.pass_hat_k, expected.pass_hat_k);
    assert_eq!(report.solved_any_count, expected.solved_any_count);
    assert_eq!(report.solved_all_count, expected.solved_all_count);
    assert!((report.mean_reasoning_tokens - expected.mean_reasoning_tokens).abs() < 1e-12);
    assert_eq!(report.component_stats.outcomes.values().sum::<usize>(), 20);

    // k mismatch is refused
    let short = EvalMeta { k: 3, ..meta.clone() };
    assert!(matches!(build_report(&results, &short), Err(MetricsError::ShapeMismatch { .. })));

    // one candidate per problem: both metrics coincide
    let first: Vec<ProblemResults<f64>> = results
        .iter()
        .map(|r| ProblemResults {
            candidates: r.candidates[..1].to_vec(),
            ..r.clone()
        })
        .collect();
    let single = build_report(&first, &EvalMeta { k: 1, ..meta.clone() }).unwrap();
    assert_eq!(single.pass_at_k, single.pass_hat_k);

    // all-correct rows give 1.0 for both
    let solved: Vec<ProblemResults<f64>> = results
        .iter()
        .filter(|r| r.candidates.iter().all(|c| c.outcome.kind.to_string() == "success"))
        .cloned()
        .collect();
    let all = build_report(&solved, &meta).unwrap();
    assert_eq!((all.pass_at_k, all.pass_hat_k), (1.0, 1.0));
}
