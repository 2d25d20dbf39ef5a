mod common;

use std::fs;
use std::path::Path;

use common::{core_fixture, stderr, stdout, verdict};
use verdict::config::BackendConfig;
use verdict::{ScoreResponse, WIRE_SCHEMA_VERSION};
use verdict_core::{BackendId, EvalReport};

fn score_golden(dir: &Path, extra: &[&str]) -> std::process::Output {
    let config = common::write_config(dir, &common::config(dir));
    let request = common::fixture("golden_group.json");
    let mut args = vec!["--config", config.to_str().unwrap(), "score", "--request", request.to_str().unwrap()];
    args.extend_from_slice(extra);
    verdict(&args)
}

#[test]
fn score_prints_the_golden_group() {
    let dir = tempfile::tempdir().unwrap();
    let out = score_golden(dir.path(), &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let response: ScoreResponse = serde_json::from_str(&stdout(&out)).unwrap();
    let expected = common::golden_expected();
    assert_eq!(response.schema_version, WIRE_SCHEMA_VERSION);
    assert_eq!(response.group_size, 4);
    assert_eq!(response.flags.regime.as_deref(), Some("no-KL"));
    assert!(!response.flags.length_reward);
    assert_eq!(response.breakdowns, expected.breakdowns);
    assert_eq!(response.totals, expected.totals);
    assert_eq!(response.outcomes, expected.outcomes);
    assert_eq!(response.answers, expected.answers);
    for (got, want) in response.advantages.iter().zip(&expected.advantages) {
        assert!((got - want).abs() < 1e-12, "{} vs {}", got, want);
    }
    let mean: f64 = response.advantages.iter().sum::<f64>() / 4.0;
    assert!(mean.abs() < 1e-9);
    for v in [&response.wall_times_ms.len(), &response.reasoning_tokens.len(), &response.advantages.len()] {
        assert_eq!(*v, 4);
    }
    assert_eq!(fs::read_dir(dir.path().join("sandbox")).map(|d| d.count()).unwrap_or(0), 0);
}

#[test]
fn score_from_a_completions_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::write_config(dir.path(), &common::config(dir.path()));
    let request = common::golden_request();
    let completions = dir.path().join("completions.json");
    fs::write(&completions, serde_json::to_string(&request.completions).unwrap()).unwrap();
    let out = verdict(&[
        "--config",
        config.to_str().unwrap(),
        "--length-reward",
        "score",
        "--completions",
        completions.to_str().unwrap(),
        "--problem-id",
        "natalia-clips",
        "--ground-truth",
        "72",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let response: ScoreResponse = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(response.flags.length_reward);
    assert_eq!(response.totals, common::golden_expected().totals);
    assert!(response.breakdowns.iter().all(|b| b.length == Some(0.0)));
}

#[test]
fn missing_interpreter_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = common::config(dir.path());
    config.backends = vec![BackendConfig::at(BackendId::LogicProlog, "/nonexistent/swipl")];
    let path = common::write_config(dir.path(), &config);
    let request = common::fixture("golden_group.json");
    let out = verdict(&["--config", path.to_str().unwrap(), "score", "--request", request.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("backend unavailable"));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let request = common::fixture("golden_group.json");
    for body in ["this is = not toml [", "[sandbox]\ntimeout_secs = -1", "unknown_key = 3"] {
        let path = dir.path().join("bad.toml");
        fs::write(&path, body).unwrap();
        let out = verdict(&["--config", path.to_str().unwrap(), "score", "--request", request.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{}: {}", body, stderr(&out));
    }
    let out = verdict(&["--config", "/nonexistent/verdict.toml", "score", "--request", request.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = verdict(&["score"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn group_size_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = score_golden(dir.path(), &[]);
    assert!(out.status.success());
    let config = common::write_config(dir.path(), &common::config(dir.path()));
    let request = common::fixture("golden_group.json");
    let out = verdict(&[
        "--config",
        config.to_str().unwrap(),
        "--group-size",
        "8",
        "score",
        "--request",
        request.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("group size"), "{}", stderr(&out));
}

fn evaluate(dir: &Path, generations: &Path, extra: &[&str]) -> std::process::Output {
    let config = common::write_config(dir, &common::config(dir));
    let data = core_fixture("eval5/problems.jsonl");
    let mut args = vec![
        "--config",
        config.to_str().unwrap(),
        "evaluate",
        "--dataset",
        "gsm8k-test",
        "--data",
        data.to_str().unwrap(),
        "--generations",
        generations.to_str().unwrap(),
        "--prompt-mode",
        "one-shot",
        "--checkpoint",
        "base",
    ];
    args.extend_from_slice(extra);
    verdict(&args)
}

#[derive(serde::Deserialize)]
struct Expected {
    pass_at_k: f64,
    pass_hat_k: f64,
    solved_any_count: usize,
    solved_all_count: usize,
    mean_reasoning_tokens: f64,
}

#[test]
fn evaluate_writes_json_and_csv_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = evaluate(dir.path(), &core_fixture("eval5/generations.jsonl"), &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("pass@4 0.8\n"), "{}", text);
    assert!(text.contains("pass^4 0.4\n"), "{}", text);

    let report_dir = dir.path().join("reports/gsm8k-test/one-shot/base");
    let report: EvalReport = serde_json::from_str(&fs::read_to_string(report_dir.join("report.json")).unwrap()).unwrap();
    let expected: Expected =
        serde_json::from_str(&fs::read_to_string(core_fixture("eval5/expected.json")).unwrap()).unwrap();
    assert_eq!(report.n_problems, 5);
    assert_eq!(report.pass_at_k, expected.pass_at_k);
    assert_eq!(report.pass_hat_k, expected.pass_hat_k);
    assert_eq!(report.solved_any_count, expected.solved_any_count);
    assert_eq!(report.solved_all_count, expected.solved_all_count);
    assert!((report.mean_reasoning_tokens - expected.mean_reasoning_tokens).abs() < 1e-12);

    let mut csv = csv::Reader::from_path(report_dir.join("report.csv")).unwrap();
    let headers = csv.headers().unwrap().clone();
    assert_eq!(&headers[0], "problem_id");
    let rows: Vec<csv::StringRecord> = csv.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(&rows[0][0], "eval5-1");
    let solved_any = headers.iter().position(|h| h == "solved_any").unwrap();
    let solved: usize = rows.iter().filter(|r| &r[solved_any] == "true").count();
    assert_eq!(solved, expected.solved_any_count);
}

fn short_generations(dir: &Path) -> std::path::PathBuf {
    let text = fs::read_to_string(core_fixture("eval5/generations.jsonl")).unwrap();
    let mut lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    lines[0]["completions"].as_array_mut().unwrap().pop();
    let path = dir.join("short.jsonl");
    let body: Vec<String> = lines.iter().map(|v| v.to_string()).collect();
    fs::write(&path, body.join("\n")).unwrap();
    path
}

#[test]
fn k_mismatch_fails_unless_padding() {
    let dir = tempfile::tempdir().unwrap();
    let short = short_generations(dir.path());
    let strict = evaluate(dir.path(), &short, &[]);
    assert_eq!(strict.status.code(), Some(1), "{}", stderr(&strict));
    assert!(stderr(&strict).contains("eval5-1"), "{}", stderr(&strict));

    let padded = evaluate(dir.path(), &short, &["--pad", "--report-dir", dir.path().join("padded").to_str().unwrap()]);
    assert!(padded.status.success(), "{}", stderr(&padded));
    let report: EvalReport = serde_json::from_str(
        &fs::read_to_string(dir.path().join("padded/gsm8k-test/one-shot/base/report.json")).unwrap(),
    )
    .unwrap();
    let first = &report.per_problem[0];
    assert_eq!(first.padded, 1);
    assert!(first.component_stats.outcomes.get("syntax_error").copied().unwrap_or(0) >= 1);
    assert!(report.per_problem[1..].iter().all(|p| p.padded == 0));
}

#[test]
fn unknown_dataset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::write_config(dir.path(), &common::config(dir.path()));
    let gens = core_fixture("eval5/generations.jsonl");
    let out = verdict(&[
        "--config",
        config.to_str().unwrap(),
        "evaluate",
        "--dataset",
        "gsm9k",
        "--generations",
        gens.to_str().unwrap(),
        "--prompt-mode",
        "zero-shot",
        "--checkpoint",
        "500",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn replay_detects_rule_changes() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("scores.jsonl");
    let request = common::fixture("golden_group.json");
    let config_path = common::write_config(dir.path(), &common::config(dir.path()));
    for _ in 0..2 {
        let out = verdict(&[
            "--config",
            config_path.to_str().unwrap(),
            "--length-reward",
            "score",
            "--request",
            request.to_str().unwrap(),
            "--log",
            log.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_eq!(fs::read_to_string(&log).unwrap().lines().count(), 2);

    let same = verdict(&["--config", config_path.to_str().unwrap(), "replay", log.to_str().unwrap()]);
    assert_eq!(same.status.code(), Some(0), "{}{}", stdout(&same), stderr(&same));
    assert!(stdout(&same).contains("2 entries replayed, 0 differences"));

    // widen the window so the short reasoning traces now earn the bonus
    let mut edited = common::config(dir.path());
    edited.length_reward.lower = 0.0001;
    edited.length_reward.upper = 0.01;
    let edited_path = dir.path().join("edited.toml");
    fs::write(&edited_path, toml::to_string(&edited).unwrap()).unwrap();
    let changed = verdict(&["--config", edited_path.to_str().unwrap(), "replay", log.to_str().unwrap()]);
    assert_eq!(changed.status.code(), Some(1));
    let text = stdout(&changed);
    assert!(text.contains("breakdowns[0].length: logged 0.0 now 1.0"), "{}", text);
    assert!(text.lines().all(|l| !l.contains("wall_times")));

    let mut missing = common::config(dir.path());
    missing.backends = vec![BackendConfig::at(BackendId::LogicProlog, "/nonexistent/swipl")];
    let missing_path = dir.path().join("missing.toml");
    fs::write(&missing_path, toml::to_string(&missing).unwrap()).unwrap();
    let gone = verdict(&["--config", missing_path.to_str().unwrap(), "replay", log.to_str().unwrap()]);
    assert_eq!(gone.status.code(), Some(3));
}
