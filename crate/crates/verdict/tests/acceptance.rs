//! Acceptance suite. Prints one PASS/FAIL line per criterion straight to
//! stdout (so the lines survive test capture) and fails if any line fails.

mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use num_rational::Rational64;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use verdict::{EvaluateRequest, GenerationRecord, Harness, ScoreFlags, ScoreRequest};
use verdict_core::metrics::{pass_at_k_exact, pass_hat_k_exact, OutcomeMatrix};
use verdict_core::parser::parse_text;
use verdict_core::reward::{group_advantages, length_reward, score_candidate_in, score_parsed};
use verdict_core::sandbox::{register_backend, InterpreterBackend};
use verdict_core::{
    AnswerValue, BackendId, Completion, ExecutionOutcome, LengthRewardConfig, OutcomeKind, Problem, PromptMode,
    RewardBreakdown, Sandbox, SandboxLimits,
};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn r(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

// ---------------------------------------------------------------- ranges

const TAGS: [&str; 6] = ["<reasoning>", "</reasoning>", "<code>", "</code>", "<query>", "</query>"];
const FRAGMENTS: [&str; 16] = [
    "total(X) :- X is 3 + 4.",
    "total(X).",
    "?- total(X)",
    "answer(72).",
    "spin :- spin.",
    "Sure, here is my answer.",
    "\n",
    "   ",
    "<",
    ">",
    "</ code>",
    "<Code>",
    "<reasoning",
    "p(X) :- X is 1/0.",
    "so the answer is 18",
    "x = [1,2,3]",
];

fn fuzz_text(rng: &mut StdRng) -> String {
    if rng.gen_bool(0.4) {
        // near-template: each block kept, dropped or damaged
        let mut out = String::new();
        if rng.gen_bool(0.2) {
            out.push_str("Preamble text.\n");
        }
        let blocks = [
            ("<reasoning>", "</reasoning>", *FRAGMENTS.choose(rng).unwrap()),
            ("<code>", "</code>", FRAGMENTS[rng.gen_range(0..5)]),
            ("<query>", "</query>", FRAGMENTS[rng.gen_range(1..3)]),
        ];
        let mut order = [0usize, 1, 2];
        if rng.gen_bool(0.2) {
            order.shuffle(rng);
        }
        for i in order {
            let (open, close, body) = blocks[i];
            if rng.gen_bool(0.9) {
                out.push_str(open);
            }
            out.push('\n');
            out.push_str(body);
            if i == 1 && rng.gen_bool(0.1) {
                out.push_str("<query>total(X).</query>");
            }
            out.push('\n');
            if rng.gen_bool(0.9) {
                out.push_str(close);
            }
            out.push('\n');
        }
        return out;
    }
    let pieces = rng.gen_range(0..14);
    let mut out = String::new();
    for _ in 0..pieces {
        match rng.gen_range(0..3) {
            0 => out.push_str(TAGS.choose(rng).unwrap()),
            1 => out.push_str(FRAGMENTS.choose(rng).unwrap()),
            _ => {
                let n = rng.gen_range(0..12);
                out.extend((0..n).map(|_| rng.gen_range(b' '..=b'~') as char));
            }
        }
    }
    out
}

fn check_ranges(b: &RewardBreakdown<Rational64>, length_on: bool) -> Result<(), String> {
    let xml_ok = b.xmlcount >= r(-1, 2) && b.xmlcount <= r(5, 8) && (b.xmlcount * 8).is_integer();
    let format = [r(0, 1), r(1, 2)];
    let correctness = [r(1, 1), r(-1, 1), r(-1, 2), r(-1, 10)];
    let length_ok = match (&b.length, length_on) {
        (Some(l), true) => *l == r(0, 1) || *l == r(1, 1),
        (None, false) => true,
        _ => false,
    };
    let sum = b.xmlcount + b.strict_format + b.soft_format + b.correctness + b.length.unwrap_or(r(0, 1));
    ensure(
        xml_ok
            && format.contains(&b.strict_format)
            && format.contains(&b.soft_format)
            && correctness.contains(&b.correctness)
            && length_ok
            && sum == b.total
            && (b.strict_format == r(0, 1) || b.soft_format == r(1, 2)),
        || format!("out of range: {:?}", b),
    )
}

fn mocked_outcome(rng: &mut StdRng, truth: &AnswerValue) -> (ExecutionOutcome, Rational64) {
    match rng.gen_range(0..6) {
        0 => (ExecutionOutcome::success(truth.clone()), r(1, 1)),
        1 => (ExecutionOutcome::success(AnswerValue::from(rng.gen_range(1000..2000))), r(-1, 1)),
        2 => (ExecutionOutcome::without_value(OutcomeKind::LogicalMismatch, ""), r(-1, 1)),
        3 => (ExecutionOutcome::without_value(OutcomeKind::SyntaxError, ""), r(-1, 2)),
        4 => (ExecutionOutcome::without_value(OutcomeKind::Timeout, ""), r(-1, 10)),
        _ => (ExecutionOutcome::without_value(OutcomeKind::NoOutput, ""), r(-1, 10)),
    }
}

fn reward_ranges() -> Verdict {
    let mut rng = StdRng::seed_from_u64(0x5eed_0001);
    let truth = AnswerValue::from(7);
    let started = Instant::now();
    for i in 0..10_000 {
        let text = fuzz_text(&mut rng);
        let parsed = parse_text(&text);
        let (outcome, expected_correctness) = mocked_outcome(&mut rng, &truth);
        let length_on = i % 2 == 0;
        let cfg = LengthRewardConfig {
            enabled: length_on,
            ..LengthRewardConfig::default()
        };
        let exact: RewardBreakdown<Rational64> = score_parsed(&parsed, &outcome, &truth, &cfg);
        check_ranges(&exact, length_on).map_err(|e| format!("{} for {:?}", e, text))?;
        ensure(exact.correctness == expected_correctness, || format!("correctness {:?} for {:?}", exact, outcome.kind))?;
        let float: RewardBreakdown<f64> = score_parsed(&parsed, &outcome, &truth, &cfg);
        ensure((-0.5..=0.625).contains(&float.xmlcount), || format!("f64 xmlcount {}", float.xmlcount))?;
    }
    let mocked = started.elapsed();
    ensure(mocked < Duration::from_secs(120), || format!("mocked fuzz took {:?}", mocked))?;

    // 200 completions executed for real
    let dir = tempfile::tempdir().unwrap();
    let sandbox = Sandbox::new(8, dir.path().join("runs"));
    let backend = register_backend(InterpreterBackend::prolog(common::interpreter_path())).unwrap();
    let limits = SandboxLimits {
        wall_timeout: Duration::from_millis(500),
        ..SandboxLimits::default()
    };
    let problem = Problem::new("fuzz", "What is 3 + 4?", truth.clone());
    let texts: Vec<String> = (0..200)
        .map(|_| {
            if rng.gen_bool(0.7) {
                let (code, query) = fuzz_program(&mut rng);
                format!("<reasoning>\nwork\n</reasoning>\n<code>\n{}\n</code>\n<query>\n{}\n</query>", code, query)
            } else {
                fuzz_text(&mut rng)
            }
        })
        .collect();
    let next = AtomicUsize::new(0);
    let failures = Mutex::new(Vec::new());
    let kinds = Mutex::new(BTreeSet::new());
    std::thread::scope(|scope| {
        for _ in 0..8 {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= texts.len() {
                    break;
                }
                let cfg = LengthRewardConfig::enabled();
                let result = score_candidate_in::<Rational64>(
                    &sandbox,
                    &Completion::new(texts[i].clone()),
                    &problem,
                    &backend,
                    &limits,
                    &cfg,
                );
                match result {
                    Ok(score) => {
                        kinds.lock().unwrap().insert(score.outcome.kind.as_str());
                        if let Err(e) = check_ranges(&score.breakdown, true) {
                            failures.lock().unwrap().push(e);
                        }
                    }
                    Err(e) => failures.lock().unwrap().push(e.to_string()),
                }
            });
        }
    });
    let failures = failures.into_inner().unwrap();
    ensure(failures.is_empty(), || format!("{} interpreter violations: {:?}", failures.len(), failures.first()))?;
    let kinds = kinds.into_inner().unwrap();
    ensure(kinds.len() == 5, || format!("interpreter samples only reached {:?}", kinds))?;
    Ok(format!(
        "10000 mocked completions in {:.1?} and 200 executed ones, 0 violations",
        mocked
    ))
}

/// Program and query drawn from a mix of well-behaved and hostile cases.
fn fuzz_program(rng: &mut StdRng) -> (String, String) {
    let a = rng.gen_range(0..10);
    let b = rng.gen_range(0..10);
    let pair = |c: &str, q: &str| (c.to_string(), q.to_string());
    match rng.gen_range(0..20) {
        0..=5 => pair(&format!("total(X) :- X is {} + {}.", a, b), "total(X)."),
        6..=7 => pair("total(X) :- X is 3 + 4.", "total(X)."),
        8..=9 => {
            let mut code = format!("total(X) :- X is {} * {}.", a, b);
            let cut = rng.gen_range(1..code.len());
            code.truncate(cut);
            pair(&code, "total(X).")
        }
        10 => pair("spin :- spin.", "spin, X = 1."),
        11 => pair("spam :- repeat, write(xxxxxxxxxxxxxxxx), fail.", "spam, X = 1."),
        12 => pair("big(L) :- numlist(1, 100000000, L).", "big(L)."),
        13 => pair("p(X) :- X is 1 / 0.", "p(X)."),
        14 => pair("p(1).", "p(2), X = 1."),
        15 => pair("p(_).", "p(X)."),
        16 => pair("p(X) :- undefined_thing(X).", "p(X)."),
        17 => pair("p(X) :- halt(3), X = 1.", "p(X)."),
        18 => pair("crash_now.\np(7).", "p(X)."),
        _ => pair("p(seven).", "p(X)."),
    }
}

// ---------------------------------------------------------------- golden

#[derive(serde::Deserialize)]
struct GoldenFile {
    cases: Vec<GoldenCase>,
}

#[derive(serde::Deserialize)]
struct GoldenCase {
    name: String,
    question: String,
    ground_truth: AnswerValue,
    completion: String,
    expected: GoldenExpected,
}

#[derive(serde::Deserialize)]
struct GoldenExpected {
    outcome: OutcomeKind,
    xmlcount: f64,
    strict_format: f64,
    soft_format: f64,
    correctness: f64,
    total: f64,
}

fn harness(dir: &Path, workers: usize) -> Harness {
    let mut config = common::config(dir);
    config.workers = Some(workers);
    Harness::new(config).unwrap()
}

fn request(id: &str, question: &str, truth: AnswerValue, completions: Vec<String>) -> ScoreRequest {
    ScoreRequest {
        schema_version: verdict::WIRE_SCHEMA_VERSION,
        problem_id: id.into(),
        question: Some(question.into()),
        ground_truth: truth,
        test_cases: Vec::new(),
        backend: BackendId::LogicProlog,
        completions,
        flags: ScoreFlags::default(),
    }
}

fn correctness_table() -> Verdict {
    let file: GoldenFile =
        serde_json::from_str(&std::fs::read_to_string(common::core_fixture("golden.json")).unwrap()).unwrap();
    ensure(file.cases.len() >= 12, || format!("only {} golden cases", file.cases.len()))?;
    let dir = tempfile::tempdir().unwrap();
    let harness = harness(dir.path(), 4);
    let results: Vec<Result<(f64, Duration, OutcomeKind), String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = file
            .cases
            .iter()
            .map(|case| {
                let harness = &harness;
                scope.spawn(move || {
                    let req = request(&case.name, &case.question, case.ground_truth.clone(), vec![case.completion.clone()]);
                    let started = Instant::now();
                    let resp = harness.score(&req).map_err(|e| e.to_string())?;
                    let elapsed = started.elapsed();
                    let b = &resp.breakdowns[0];
                    let e = &case.expected;
                    let got = (b.xmlcount, b.strict_format, b.soft_format, b.correctness, b.total);
                    let want = (e.xmlcount, e.strict_format, e.soft_format, e.correctness, e.total);
                    ensure(got == want && resp.outcomes[0] == e.outcome, || {
                        format!("{}: got {:?} {:?}, want {:?} {:?}", case.name, resp.outcomes[0], got, e.outcome, want)
                    })?;
                    Ok((b.correctness, elapsed, resp.outcomes[0]))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut seen = BTreeSet::new();
    let mut timeout_wall = Duration::ZERO;
    for result in results {
        let (correctness, elapsed, kind) = result?;
        seen.insert((correctness * 10.0) as i64);
        if kind == OutcomeKind::Timeout {
            timeout_wall = timeout_wall.max(elapsed);
        }
    }
    let want: BTreeSet<i64> = [10, -10, -5, -1].into_iter().collect();
    ensure(seen == want, || format!("correctness values seen (x10): {:?}", seen))?;
    ensure(
        timeout_wall > Duration::ZERO && timeout_wall <= Duration::from_secs(6),
        || format!("timeout case returned after {:?}", timeout_wall),
    )?;
    Ok(format!(
        "{} golden cases exact, scores {{+1, -1, -0.5, -0.1}} all seen, timeout case returned in {:.2?}",
        file.cases.len(),
        timeout_wall
    ))
}

// ---------------------------------------------------------------- length

fn length_boundary() -> Verdict {
    let cfg = LengthRewardConfig::enabled();
    let counts = [89usize, 90, 91, 129, 130, 131];
    let expected = [0i64, 0, 1, 1, 0, 0];
    let mut got = Vec::new();
    for (&n, &want) in counts.iter().zip(&expected) {
        let reasoning = vec!["step"; n].join(" ");
        let direct: Rational64 = length_reward(&reasoning, &cfg);
        let text = format!("<reasoning>\n{}\n</reasoning>\n<code>\np(1).\n</code>\n<query>\np(X).\n</query>", reasoning);
        let parsed = parse_text(&text);
        let outcome = ExecutionOutcome::success(AnswerValue::from(1));
        let scored: RewardBreakdown<Rational64> = score_parsed(&parsed, &outcome, &AnswerValue::from(1), &cfg);
        ensure(direct == r(want, 1) && scored.length == Some(r(want, 1)), || {
            format!("{} tokens gave {} / {:?}, want {}", n, direct, scored.length, want)
        })?;
        got.push(*direct.numer());
    }
    Ok(format!("tokens {:?} -> rewards {:?}, exact", counts, got))
}

// ---------------------------------------------------------------- metrics

fn binomial(n: i64, k: i64) -> i64 {
    if k < 0 || k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn metrics_oracle() -> Verdict {
    let mut rng = StdRng::seed_from_u64(0x5eed_0004);
    let k = 4usize;
    for trial in 0..1000 {
        let n = rng.gen_range(1..=100);
        let rows: Vec<Vec<bool>> = (0..n)
            .map(|_| {
                let p: f64 = *[0.0, 0.2, 0.5, 0.8, 1.0].choose(&mut rng).unwrap();
                (0..k).map(|_| rng.gen_bool(p)).collect()
            })
            .collect();
        // combinatorial form: chance that a k-subset of the k samples has a
        // correct one (resp. only correct ones)
        let kk = k as i64;
        let (mut at, mut hat) = (r(0, 1), r(0, 1));
        for row in &rows {
            let c = row.iter().filter(|&&x| x).count() as i64;
            at += r(1, 1) - r(binomial(kk - c, kk), binomial(kk, kk));
            hat += r(binomial(c, kk), binomial(kk, kk));
        }
        at /= n as i64;
        hat /= n as i64;
        let m = OutcomeMatrix::new(rows).unwrap();
        let (got_at, got_hat) = (pass_at_k_exact(&m).unwrap(), pass_hat_k_exact(&m).unwrap());
        ensure(got_at == at && got_hat == hat, || {
            format!("trial {}: got ({}, {}), oracle ({}, {})", trial, got_at, got_hat, at, hat)
        })?;
        ensure(got_hat <= got_at, || format!("trial {}: pass^k {} > pass@k {}", trial, got_hat, got_at))?;
    }
    Ok("1000 matrices (N <= 100, k = 4) equal the enumerator exactly, pass^k <= pass@k".into())
}

// ---------------------------------------------------------------- advantages

fn advantage_properties() -> Verdict {
    let mut rng = StdRng::seed_from_u64(0x5eed_0005);
    let xml = [0.0, 0.125, 0.25, 0.375, 0.5, 0.625, -0.125];
    let fmt = [0.0, 0.5];
    let cor = [1.0, -1.0, -0.5, -0.1];
    let draw = |rng: &mut StdRng| -> f64 {
        xml.choose(rng).unwrap() + fmt.choose(rng).unwrap() + fmt.choose(rng).unwrap() + cor.choose(rng).unwrap()
    };
    let (mut uniform, mut worst_mean, mut worst_shift) = (0, 0f64, 0f64);
    for _ in 0..1000 {
        let g = rng.gen_range(1..=16);
        let rewards: Vec<f64> = if rng.gen_bool(0.25) {
            vec![draw(&mut rng); g]
        } else {
            (0..g).map(|_| draw(&mut rng)).collect()
        };
        let adv = group_advantages(&rewards);
        ensure(adv.len() == g, || "length changed".into())?;
        let all_same = rewards.iter().all(|&x| x == rewards[0]);
        if all_same {
            uniform += 1;
            ensure(adv.iter().all(|&a| a == 0.0), || format!("uniform {:?} gave {:?}", rewards, adv))?;
        }
        let mean = adv.iter().sum::<f64>() / g as f64;
        worst_mean = worst_mean.max(mean.abs());
        ensure(mean.abs() <= 1e-9, || format!("mean {} for {:?}", mean, rewards))?;
        let c: f64 = rng.gen_range(-5.0..5.0);
        let shifted: Vec<f64> = rewards.iter().map(|x| x + c).collect();
        for (a, b) in adv.iter().zip(group_advantages(&shifted)) {
            worst_shift = worst_shift.max((a - b).abs());
        }
        ensure(worst_shift <= 1e-9, || format!("shift by {} moved advantages by {}", c, worst_shift))?;
    }
    Ok(format!(
        "1000 groups (G 1..16, {} uniform): max |mean| {:.1e}, max shift drift {:.1e}",
        uniform, worst_mean, worst_shift
    ))
}

// ---------------------------------------------------------------- hygiene

/// Pids and process groups of live processes whose command line mentions `root`.
fn processes_under(root: &str) -> Vec<(u32, u32)> {
    let me = std::process::id();
    let Ok(entries) = std::fs::read_dir("/proc") else {
        return Vec::new();
    };
    entries
        .flatten()
        .filter_map(|e| e.file_name().to_str()?.parse::<u32>().ok())
        .filter(|&pid| pid != me)
        .filter(|pid| {
            std::fs::read(format!("/proc/{}/cmdline", pid))
                .map(|c| String::from_utf8_lossy(&c).contains(root))
                .unwrap_or(false)
        })
        .filter_map(|pid| {
            // fields after the parenthesised command: state ppid pgrp ...
            let stat = std::fs::read_to_string(format!("/proc/{}/stat", pid)).ok()?;
            let rest = &stat[stat.rfind(')')? + 1..];
            let pgid = rest.split_whitespace().nth(2)?.parse().ok()?;
            Some((pid, pgid))
        })
        .collect()
}

/// Concurrent executions: each run owns one process group.
fn live_executions_under(root: &str) -> usize {
    processes_under(root).into_iter().map(|(_, g)| g).collect::<BTreeSet<_>>().len()
}

fn sandbox_hygiene() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let backend = register_backend(InterpreterBackend::prolog(common::crashing_interpreter(dir.path()))).unwrap();
    let limits = SandboxLimits {
        wall_timeout: Duration::from_millis(250),
        ..SandboxLimits::default()
    };
    let mut notes = Vec::new();
    for (w, seed) in [(1usize, 11u64), (4, 12), (8, 13)] {
        let root = dir.path().join(format!("runs-w{}", w));
        let root_text = root.to_string_lossy().into_owned();
        let sandbox = Sandbox::new(w, &root);
        let mut rng = StdRng::seed_from_u64(seed);
        let programs: Vec<(String, String)> = (0..1000).map(|_| fuzz_program(&mut rng)).collect();
        let stop = AtomicBool::new(false);
        let peak_seen = AtomicUsize::new(0);
        let next = AtomicUsize::new(0);
        let errors = Mutex::new(Vec::new());
        let kinds = Mutex::new(BTreeSet::new());
        std::thread::scope(|scope| {
            let monitor = scope.spawn(|| {
                while !stop.load(Ordering::Relaxed) {
                    peak_seen.fetch_max(live_executions_under(&root_text), Ordering::Relaxed);
                    std::thread::sleep(Duration::from_millis(1));
                }
            });
            let submitters: Vec<_> = (0..16)
                .map(|_| {
                    scope.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= programs.len() {
                            break;
                        }
                        let (code, query) = &programs[i];
                        match sandbox.execute(code, query, &backend, &limits) {
                            Ok(out) => {
                                kinds.lock().unwrap().insert(out.kind.as_str());
                            }
                            Err(e) => errors.lock().unwrap().push(e.to_string()),
                        }
                    })
                })
                .collect();
            for s in submitters {
                s.join().unwrap();
            }
            stop.store(true, Ordering::Relaxed);
            monitor.join().unwrap();
        });
        std::thread::sleep(Duration::from_millis(100));
        let errors = errors.into_inner().unwrap();
        ensure(errors.is_empty(), || format!("W={}: {} execution errors: {:?}", w, errors.len(), errors.first()))?;
        let orphans = processes_under(&root_text).len();
        let leftovers = std::fs::read_dir(&root).map(|d| d.count()).unwrap_or(0);
        let observed = peak_seen.load(Ordering::Relaxed);
        let pool_peak = sandbox.pool().peak();
        ensure(orphans == 0, || format!("W={}: {} orphan processes", w, orphans))?;
        ensure(leftovers == 0, || format!("W={}: {} temp entries left", w, leftovers))?;
        ensure(observed <= w && pool_peak <= w, || {
            format!("W={}: saw {} concurrent executions, pool peak {}", w, observed, pool_peak)
        })?;
        let kinds = kinds.into_inner().unwrap();
        ensure(kinds.contains("timeout") && kinds.contains("syntax_error"), || {
            format!("W={}: fuzz never hit a looper or crasher: {:?}", w, kinds)
        })?;
        notes.push(format!("W={} peak {}", w, observed.max(pool_peak)));
    }
    Ok(format!("3 x 1000 executions, 0 orphans, 0 temp files, {}", notes.join(", ")))
}

// ---------------------------------------------------------------- throughput

fn throughput() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let harness = harness(dir.path(), 8);
    let golden = common::golden_request();
    let single = request("single", "", golden.ground_truth.clone(), vec![golden.completions[0].clone()]);
    let started = Instant::now();
    harness.score(&single).map_err(|e| e.to_string())?;
    let one = started.elapsed();
    let batch: Vec<String> = golden.completions.iter().cycle().take(64).cloned().collect();
    let req = request("batch", "", golden.ground_truth.clone(), batch);
    let started = Instant::now();
    let resp = harness.score(&req).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure(resp.group_size == 64, || "group size".into())?;
    let worst = harness.limits().wall_timeout;
    ensure(elapsed < Duration::from_secs(15) && elapsed <= 2 * worst + Duration::from_secs(5), || {
        format!("64 candidates took {:?}", elapsed)
    })?;
    Ok(format!(
        "64 candidates with W=8 in {:.2?} (one candidate {:.1?}, bound 2 x {:?} + overhead < 15 s)",
        elapsed, one, worst
    ))
}

// ---------------------------------------------------------------- rosetta

const TASK_LIST: [&str; 20] = [
    "Fibonacci sequence",
    "Sieve of Eratosthenes",
    "Quicksort",
    "Binary search",
    "Greatest common divisor",
    "Factorial",
    "Towers of Hanoi",
    "Palindrome detection",
    "Prime decomposition",
    "Dijkstra's Algorithm",
    "Levenshtein distance",
    "N-queens problem",
    "Ackermann function",
    "Balanced brackets",
    "Knight's tour",
    "Merge sort",
    "Roman numerals decode",
    "Longest common subsequence",
    "Huffman coding",
    "24 game",
];

fn rosetta_pack() -> Verdict {
    let tasks = verdict_core::load_rosetta(verdict_core::corpus::bundled_rosetta_dir()).map_err(|e| e.to_string())?;
    let names: Vec<&str> = tasks.iter().map(|t| t.name.as_str()).collect();
    ensure(names == TASK_LIST, || format!("pack holds {:?}", names))?;
    let generations = tasks
        .iter()
        .map(|t| {
            let code = t.reference.clone().ok_or(format!("{} has no reference", t.name))?;
            let text = format!(
                "<reasoning>\nReference solution.\n</reasoning>\n<code>\n{}\n</code>\n<query>\n{}\n</query>",
                code.trim(),
                t.test_cases[0].query
            );
            Ok(GenerationRecord {
                problem_id: t.slug(),
                completions: vec![text; 4],
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let dir = tempfile::tempdir().unwrap();
    let harness = harness(dir.path(), 8);
    let out = harness
        .evaluate(&EvaluateRequest {
            schema_version: verdict::WIRE_SCHEMA_VERSION,
            dataset_id: "rosetta20".into(),
            prompt_mode: PromptMode::OneShot,
            checkpoint_label: "reference".into(),
            k: 4,
            backend: BackendId::LogicProlog,
            pad: false,
            length_reward: None,
            generations,
        })
        .map_err(|e| e.to_string())?;
    let report = out.report;
    let failing: Vec<&str> = report
        .per_problem
        .iter()
        .filter(|p| !p.solved_all)
        .map(|p| p.problem_id.as_str())
        .collect();
    ensure(report.n_problems == 20 && report.pass_at_k == 1.0 && report.pass_hat_k == 1.0, || {
        format!("pass@4 {} pass^4 {}, failing {:?}", report.pass_at_k, report.pass_hat_k, failing)
    })?;
    Ok(format!("20 tasks loaded, reference pass@4 = {} and pass^4 = {}", report.pass_at_k, report.pass_hat_k))
}

// ---------------------------------------------------------------- structure

fn structure_enumeration() -> Verdict {
    let (mut checked, mut best) = (0, f64::MIN);
    for mask in 0u32..32 {
        for nested in [false, true] {
            let has = |bit: u32| mask & (1 << bit) != 0;
            // a nested query needs an open code block holding a query tag
            if nested && !(has(2) && has(3) && has(4)) {
                continue;
            }
            let mut text = String::new();
            if has(0) {
                text.push_str("<reasoning>");
            }
            text.push_str("\nthink\n");
            if has(1) {
                text.push_str("</reasoning>");
            }
            text.push('\n');
            if has(2) {
                text.push_str("<code>");
            }
            text.push_str("\np(1).\n");
            if nested {
                text.push_str("<query>p(X).</query>\n");
            }
            if has(3) {
                text.push_str("</code>");
            }
            text.push('\n');
            if has(4) && !nested {
                text.push_str("<query>");
            }
            if !nested {
                text.push_str("\np(X).\n</query>");
            }
            let parsed = parse_text(&text);
            let rep = &parsed.report;
            let outcome = ExecutionOutcome::without_value(OutcomeKind::NoOutput, "");
            let b: RewardBreakdown<Rational64> =
                score_parsed(&parsed, &outcome, &AnswerValue::from(1), &LengthRewardConfig::default());
            let want = r(mask.count_ones() as i64, 8) - if nested { r(1, 2) } else { r(0, 1) };
            ensure(b.xmlcount == want, || format!("mask {:05b} nested {}: xmlcount {}", mask, nested, b.xmlcount))?;
            ensure(!rep.strict_match || rep.soft_extractable, || format!("strict without soft: {:?}", text))?;
            ensure(rep.strict_match == (mask == 31 && !nested), || {
                format!("mask {:05b} nested {}: strict {}", mask, nested, rep.strict_match)
            })?;
            let xml: f64 = b.xmlcount.to_integer() as f64 + (*b.xmlcount.numer() % *b.xmlcount.denom()) as f64 / *b.xmlcount.denom() as f64;
            best = best.max(xml);
            checked += 1;
        }
    }
    ensure(best == 0.625, || format!("maximum xmlcount {}", best))?;
    Ok(format!("{} subset/nesting combinations, strict implies soft, max xmlcount {}", checked, best))
}

// ---------------------------------------------------------------- runner

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("reward-range-conformance", reward_ranges),
        ("correctness-rule-table", correctness_table),
        ("length-reward-boundary", length_boundary),
        ("metrics-oracle-equivalence", metrics_oracle),
        ("advantage-properties", advantage_properties),
        ("sandbox-hygiene", sandbox_hygiene),
        ("end-to-end-throughput", throughput),
        ("rosetta-pack-sanity", rosetta_pack),
        ("strict-implies-soft-enumeration", structure_enumeration),
    ];
    let mut failed = Vec::new();
    let mut stdout = std::io::stdout();
    writeln!(stdout).unwrap();
    for (name, run) in criteria {
        let started = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {}", msg))
        });
        let line = match &verdict {
            Ok(detail) => format!("PASS {}: {} [{:.1?}]", name, detail, started.elapsed()),
            Err(detail) => format!("FAIL {}: {} [{:.1?}]", name, detail, started.elapsed()),
        };
        writeln!(stdout, "{}", line).unwrap();
        stdout.flush().unwrap();
        if verdict.is_err() {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {:?}", failed);
}
