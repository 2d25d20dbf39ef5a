use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use verdict::config::BackendConfig;
use verdict::replay::replay;
use verdict::service::{drain_period, serve, shutdown_signal};
use verdict::{
    EvaluateRequest, GenerationRecord, Harness, HarnessConfig, HarnessError, ScoreFlags, ScoreRequest,
    WIRE_SCHEMA_VERSION,
};
use verdict_core::{normalize_answer, BackendId, PromptMode};

#[derive(Debug, Parser)]
#[command(name = "verdict", version, about = "Score, evaluate and serve execution-verified completions")]
struct Cli {
    /// TOML config file; falls back to VERDICT_CONFIG, then built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Interpreter backend (logic-prolog or functional-lisp).
    #[arg(long, global = true)]
    backend: Option<BackendId>,
    /// Required completions per scored group.
    #[arg(long, global = true)]
    group_size: Option<usize>,
    /// Add the length-window reward component (`--length-reward=false` turns it off).
    #[arg(long, global = true, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    length_reward: Option<bool>,
    /// Interpreter processes allowed at once.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score one group of completions and print the response document.
    Score(ScoreArgs),
    /// Score recorded generations for a dataset and write a report.
    Evaluate(EvaluateArgs),
    /// Run the HTTP scoring service.
    Serve(ServeArgs),
    /// Re-score a score log and diff against what was logged.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// A score request document; `-` reads stdin.
    #[arg(long, conflicts_with_all = ["completions", "problem_id", "ground_truth", "question"])]
    request: Option<PathBuf>,
    /// JSON array of completion strings, or an object with a `completions` array.
    #[arg(long, requires_all = ["problem_id", "ground_truth"])]
    completions: Option<PathBuf>,
    #[arg(long)]
    problem_id: Option<String>,
    #[arg(long)]
    ground_truth: Option<String>,
    #[arg(long)]
    question: Option<String>,
    /// Training regime label echoed in the response, e.g. no-KL.
    #[arg(long)]
    regime: Option<String>,
    /// Append the scored group to this log instead of the configured one.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    pretty: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: String,
    /// JSON lines of {"problem_id", "completions"}.
    #[arg(long)]
    generations: PathBuf,
    #[arg(long)]
    prompt_mode: PromptMode,
    #[arg(long)]
    checkpoint: String,
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Fill missing candidates with empty completions (scored -0.5) instead of failing.
    #[arg(long)]
    pad: bool,
    /// Dataset file or directory, overriding the config.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    report_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Listen address; overrides VERDICT_BIND and the config.
    #[arg(long)]
    bind: Option<String>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    log: PathBuf,
    /// Print the diffs as one JSON document.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {:#}", e);
            let code = e.downcast_ref::<HarnessError>().map_or(1, HarnessError::exit_code);
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let mut config = HarnessConfig::load(cli.config.as_deref()).map_err(HarnessError::from)?;
    if let Some(id) = cli.backend {
        if !config.backends.iter().any(|b| b.id == id) {
            config.backends.push(BackendConfig::discover(id));
        }
    }
    if cli.group_size.is_some() {
        config.group_size = cli.group_size;
    }
    if let Some(on) = cli.length_reward {
        config.length_reward.enabled = on;
    }
    if cli.workers.is_some() {
        config.workers = cli.workers;
    }
    match cli.command {
        Command::Score(args) => {
            if let Some(log) = &args.log {
                config.score_log = Some(log.clone());
            }
            score(Harness::new(config)?, cli.backend, cli.length_reward, args)
        }
        Command::Evaluate(args) => {
            if let Some(path) = &args.data {
                config.datasets.insert(args.dataset.clone(), path.clone());
            }
            if let Some(dir) = &args.report_dir {
                config.report_dir = dir.clone();
            }
            evaluate(Harness::new(config)?, cli.backend, args)
        }
        Command::Serve(args) => {
            if let Some(bind) = args.bind {
                config.bind = bind;
            }
            run_service(Harness::new(config)?)
        }
        Command::Replay(args) => {
            // replay never appends to the log it is reading
            config.score_log = None;
            run_replay(Harness::new(config)?, &args)
        }
    }
}

fn read_input(path: &Path) -> Result<String, HarnessError> {
    if path == Path::new("-") {
        let mut text = String::new();
        std::io::stdin().read_to_string(&mut text)?;
        return Ok(text);
    }
    std::fs::read_to_string(path).map_err(|e| HarnessError::BadRequest(format!("{}: {}", path.display(), e)))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CompletionsFile {
    List(Vec<String>),
    Object { completions: Vec<String> },
}

fn score(
    harness: Harness,
    backend: Option<BackendId>,
    length_reward: Option<bool>,
    args: ScoreArgs,
) -> anyhow::Result<u8> {
    let mut req: ScoreRequest = match (&args.request, &args.completions) {
        (Some(path), _) => {
            let text = read_input(path)?;
            serde_json::from_str(&text)
                .map_err(|e| HarnessError::BadRequest(format!("{}: {}", path.display(), e)))?
        }
        (None, Some(path)) => {
            let text = read_input(path)?;
            let completions = match serde_json::from_str(&text)
                .map_err(|e| HarnessError::BadRequest(format!("{}: {}", path.display(), e)))?
            {
                CompletionsFile::List(list) => list,
                CompletionsFile::Object { completions } => completions,
            };
            ScoreRequest {
                schema_version: WIRE_SCHEMA_VERSION,
                problem_id: args.problem_id.clone().unwrap_or_default(),
                question: args.question.clone(),
                ground_truth: normalize_answer(args.ground_truth.as_deref().unwrap_or_default()),
                test_cases: Vec::new(),
                backend: backend.unwrap_or(BackendId::LogicProlog),
                completions,
                flags: ScoreFlags::default(),
            }
        }
        (None, None) => {
            return Err(HarnessError::BadRequest(
                "score needs --request, or --completions with --problem-id and --ground-truth".into(),
            )
            .into())
        }
    };
    if let Some(id) = backend {
        req.backend = id;
    }
    if args.regime.is_some() {
        req.flags.regime = args.regime.clone();
    }
    // an explicit flag beats whatever the request carries
    if length_reward.is_some() {
        req.flags.length_reward = length_reward;
    }
    let response = harness.score(&req)?;
    let text = if args.pretty {
        serde_json::to_string_pretty(&response)?
    } else {
        serde_json::to_string(&response)?
    };
    println!("{}", text);
    Ok(0)
}

fn read_generations(path: &Path) -> Result<Vec<GenerationRecord>, HarnessError> {
    let text = read_input(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map_err(|e| HarnessError::BadRequest(format!("{}:{}: {}", path.display(), i + 1, e)))
        })
        .collect()
}

fn evaluate(harness: Harness, backend: Option<BackendId>, args: EvaluateArgs) -> anyhow::Result<u8> {
    let req = EvaluateRequest {
        schema_version: WIRE_SCHEMA_VERSION,
        dataset_id: args.dataset.clone(),
        prompt_mode: args.prompt_mode,
        checkpoint_label: args.checkpoint.clone(),
        k: args.k,
        backend: backend.unwrap_or(BackendId::LogicProlog),
        pad: args.pad,
        length_reward: None,
        generations: read_generations(&args.generations)?,
    };
    let out = harness.evaluate(&req)?;
    let r = &out.report;
    println!(
        "dataset {} prompt {} checkpoint {} problems {} k {}",
        r.dataset_id, r.prompt_mode, r.checkpoint_label, r.n_problems, r.k
    );
    println!("pass@{} {}", r.k, r.pass_at_k);
    println!("pass^{} {}", r.k, r.pass_hat_k);
    println!("report {}", out.json_path.display());
    println!("csv {}", out.csv_path.display());
    Ok(0)
}

fn run_service(harness: Harness) -> anyhow::Result<u8> {
    let harness = Arc::new(harness);
    for b in harness.health().backends {
        match (&b.probe, &b.error) {
            (Some(p), _) => eprintln!("backend {}: {} ({})", b.backend, p.executable_path.display(), p.version),
            (None, Some(e)) => eprintln!("backend {} unavailable: {}", b.backend, e),
            _ => {}
        }
    }
    let drain = drain_period(&harness);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting the async runtime")?;
    let bind = harness.config().bind.clone();
    let result = runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .with_context(|| format!("binding {}", bind))?;
        eprintln!("listening on {}", listener.local_addr()?);
        serve(listener, harness, shutdown_signal()).await?;
        anyhow::Ok(())
    });
    runtime.shutdown_timeout(drain);
    result.map(|()| 0)
}

fn run_replay(harness: Harness, args: &ReplayArgs) -> anyhow::Result<u8> {
    let summary = replay(&harness, &args.log)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        for diff in &summary.diffs {
            println!("{}", diff);
        }
        println!("{} entries replayed, {} differences", summary.entries, summary.diffs.len());
    }
    Ok(if summary.diffs.is_empty() { 0 } else { 1 })
}
