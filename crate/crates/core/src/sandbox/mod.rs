//! Isolated execution of extracted programs, one subprocess per run.

mod driver;
mod pool;
mod process;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;
use std::sync::{Arc, OnceLock, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::answer::{compare_answers, normalize_answer, AnswerValue};
use crate::error::SandboxError;

pub use driver::{last_variable, prolog_query_text};
use driver::Marker;
pub use pool::{Permit, WorkerPool};

pub const SANDBOX_DIR_ENV: &str = "VERDICT_SANDBOX_DIR";
pub const PROBE_TIMEOUT: Duration = Duration::from_secs(2);
pub const BUNDLED_PROLOG: &str = "verdict-prolog";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SandboxLimits {
    pub wall_timeout: Duration,
    pub memory_cap: u64,
    pub max_output: usize,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        Self {
            wall_timeout: Duration::from_secs(5),
            memory_cap: 512 * 1024 * 1024,
            max_output: 64 * 1024,
        }
    }
}

impl SandboxLimits {
    pub fn validate(&self) -> Result<(), String> {
        if self.wall_timeout.is_zero() {
            return Err("wall_timeout must be positive".into());
        }
        if self.memory_cap == 0 {
            return Err("memory_cap must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum BackendId {
    LogicProlog,
    FunctionalLisp,
}

impl BackendId {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendId::LogicProlog => "logic-prolog",
            BackendId::FunctionalLisp => "functional-lisp",
        }
    }
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logic-prolog" | "prolog" => Ok(BackendId::LogicProlog),
            "functional-lisp" | "lisp" => Ok(BackendId::FunctionalLisp),
            other => Err(format!("unknown backend {:?}", other)),
        }
    }
}

/// How to launch an interpreter. Template arguments may contain `{driver}`,
/// `{program}`, `{query}` and `{dir}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterpreterBackend {
    pub id: BackendId,
    pub executable_path: PathBuf,
    pub program_file_extension: String,
    pub invocation_template: Vec<String>,
}

impl InterpreterBackend {
    pub fn prolog(executable_path: impl Into<PathBuf>) -> Self {
        Self {
            id: BackendId::LogicProlog,
            executable_path: executable_path.into(),
            program_file_extension: "pl".into(),
            invocation_template: ["-q", "-f", "none", "-g", "verdict_main", "-t", "halt", "{driver}"]
                .map(String::from)
                .to_vec(),
        }
    }

    pub fn lisp(executable_path: impl Into<PathBuf>) -> Self {
        Self {
            id: BackendId::FunctionalLisp,
            executable_path: executable_path.into(),
            program_file_extension: "lisp".into(),
            invocation_template: ["--script", "{driver}"].map(String::from).to_vec(),
        }
    }

    /// Default spec for `id`: the usual interpreter on PATH, or for Prolog the
    /// bundled one shipped next to the running executable.
    pub fn discover(id: BackendId) -> Option<Self> {
        match id {
            BackendId::LogicProlog => find_on_path("swipl")
                .or_else(bundled_prolog)
                .map(Self::prolog),
            BackendId::FunctionalLisp => find_on_path("sbcl").map(Self::lisp),
        }
    }
}

pub fn find_on_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(name))
        .find(|candidate| is_executable(candidate))
}

/// The bundled interpreter next to the current executable, or one directory
/// up (test binaries live in `target/<profile>/deps`).
pub fn bundled_prolog() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?;
    let found = [Some(dir), dir.parent()]
        .into_iter()
        .flatten()
        .map(|d| d.join(BUNDLED_PROLOG))
        .find(|candidate| is_executable(candidate));
    found
}

fn is_executable(path: &Path) -> bool {
    fs::metadata(path)
        .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
        .unwrap_or(false)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub backend: BackendId,
    pub executable_path: PathBuf,
    pub version: String,
    pub probe_ms: u64,
}

/// A registered, probed backend. Cheap to clone.
#[derive(Debug, Clone)]
pub struct Backend(Arc<BackendInner>);

#[derive(Debug)]
struct BackendInner {
    spec: InterpreterBackend,
    probe: ProbeReport,
}

impl Backend {
    pub fn spec(&self) -> &InterpreterBackend {
        &self.0.spec
    }

    pub fn id(&self) -> BackendId {
        self.0.spec.id
    }

    pub fn probe(&self) -> &ProbeReport {
        &self.0.probe
    }
}

/// Probes `spec` with a version query and returns a handle on success.
pub fn register_backend(spec: InterpreterBackend) -> Result<Backend, SandboxError> {
    let path = &spec.executable_path;
    if !is_executable(path) {
        return Err(SandboxError::BackendUnavailable(format!(
            "{} is not an executable file",
            path.display()
        )));
    }
    let limits = SandboxLimits {
        wall_timeout: PROBE_TIMEOUT,
        ..SandboxLimits::default()
    };
    let mut cmd = Command::new(path);
    cmd.arg("--version");
    let pool = WorkerPool::new(1);
    let out = process::run(cmd, &limits, &pool).map_err(|e| {
        SandboxError::BackendUnavailable(format!("{}: {}", path.display(), e))
    })?;
    if out.timed_out {
        return Err(SandboxError::BackendUnavailable(format!(
            "{}: version probe did not answer within {:?}",
            path.display(),
            PROBE_TIMEOUT
        )));
    }
    if out.crashed() {
        return Err(SandboxError::BackendUnavailable(format!(
            "{}: version probe failed with {:?}",
            path.display(),
            out.status
        )));
    }
    let text = String::from_utf8_lossy(&out.stdout);
    let version = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
        .to_string();
    let probe = ProbeReport {
        backend: spec.id,
        executable_path: spec.executable_path.clone(),
        version,
        probe_ms: out.wall_time.as_millis() as u64,
    };
    Ok(Backend(Arc::new(BackendInner { spec, probe })))
}

/// Registered backends keyed by id. Written at startup, read afterwards.
#[derive(Debug, Default)]
pub struct BackendRegistry {
    backends: RwLock<HashMap<BackendId, Backend>>,
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, spec: InterpreterBackend) -> Result<Backend, SandboxError> {
        let backend = register_backend(spec)?;
        self.backends
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(backend.id(), backend.clone());
        Ok(backend)
    }

    pub fn get(&self, id: BackendId) -> Option<Backend> {
        self.backends
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(&id)
            .cloned()
    }

    pub fn probes(&self) -> Vec<ProbeReport> {
        let mut probes: Vec<_> = self
            .backends
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .map(|b| b.probe().clone())
            .collect();
        probes.sort_by_key(|p| p.backend);
        probes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Success,
    LogicalMismatch,
    SyntaxError,
    Timeout,
    NoOutput,
}

impl OutcomeKind {
    pub const ALL: [OutcomeKind; 5] = [
        OutcomeKind::Success,
        OutcomeKind::LogicalMismatch,
        OutcomeKind::SyntaxError,
        OutcomeKind::Timeout,
        OutcomeKind::NoOutput,
    ];
}

impl OutcomeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::Success => "success",
            OutcomeKind::LogicalMismatch => "logical_mismatch",
            OutcomeKind::SyntaxError => "syntax_error",
            OutcomeKind::Timeout => "timeout",
            OutcomeKind::NoOutput => "no_output",
        }
    }
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub kind: OutcomeKind,
    pub value: Option<AnswerValue>,
    pub stderr_excerpt: String,
    #[serde(rename = "wall_time_ms", with = "duration_ms")]
    pub wall_time: Duration,
}

impl ExecutionOutcome {
    pub fn without_value(kind: OutcomeKind, stderr_excerpt: impl Into<String>) -> Self {
        Self {
            kind,
            value: None,
            stderr_excerpt: stderr_excerpt.into(),
            wall_time: Duration::ZERO,
        }
    }

    pub fn success(value: AnswerValue) -> Self {
        Self {
            kind: OutcomeKind::Success,
            value: Some(value),
            stderr_excerpt: String::new(),
            wall_time: Duration::ZERO,
        }
    }

    /// Turns a successful run whose value disagrees with `truth` into a
    /// logical mismatch.
    pub fn judge(mut self, truth: &AnswerValue) -> Self {
        if self.kind == OutcomeKind::Success {
            if let Some(value) = &self.value {
                if !compare_answers(value, truth) {
                    self.kind = OutcomeKind::LogicalMismatch;
                }
            }
        }
        self
    }

    pub fn is_correct(&self, truth: &AnswerValue) -> bool {
        self.kind == OutcomeKind::Success
            && self.value.as_ref().is_some_and(|v| compare_answers(v, truth))
    }
}

pub mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1000.0)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(ms.max(0.0) / 1000.0))
    }
}

/// Bounded pool of interpreter subprocesses rooted in one temp directory.
#[derive(Debug)]
pub struct Sandbox {
    pool: WorkerPool,
    root: PathBuf,
}

impl Sandbox {
    pub fn new(workers: usize, root: impl Into<PathBuf>) -> Self {
        Self {
            pool: WorkerPool::new(workers),
            root: root.into(),
        }
    }

    /// Pool sized to the CPU count, rooted at `VERDICT_SANDBOX_DIR` or the
    /// system temp dir.
    pub fn from_env(workers: Option<usize>) -> Self {
        let workers = workers.unwrap_or_else(default_workers);
        Self::new(workers, default_root())
    }

    pub fn global() -> &'static Sandbox {
        static GLOBAL: OnceLock<Sandbox> = OnceLock::new();
        GLOBAL.get_or_init(|| Sandbox::from_env(None))
    }

    pub fn pool(&self) -> &WorkerPool {
        &self.pool
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn execute(
        &self,
        code: &str,
        query: &str,
        backend: &Backend,
        limits: &SandboxLimits,
    ) -> Result<ExecutionOutcome, SandboxError> {
        let spec = backend.spec();
        if !is_executable(&spec.executable_path) {
            return Err(SandboxError::BackendUnavailable(format!(
                "{} is missing",
                spec.executable_path.display()
            )));
        }
        let prepared = match driver::prepare(spec.id, code, query, driver::new_nonce()) {
            Ok(p) => p,
            Err(reason) => return Ok(ExecutionOutcome::without_value(OutcomeKind::SyntaxError, reason)),
        };

        let _permit = self.pool.acquire();
        fs::create_dir_all(&self.root)?;
        let dir = tempfile::Builder::new()
            .prefix("verdict-")
            .tempdir_in(&self.root)?;
        let ext = &spec.program_file_extension;
        let program_path = dir.path().join(format!("program.{}", ext));
        let query_path = dir.path().join(format!("query.{}", ext));
        let driver_path = dir.path().join(format!("driver.{}", ext));
        fs::write(&program_path, &prepared.program)?;
        fs::write(&query_path, &prepared.query)?;
        fs::write(&driver_path, &prepared.driver)?;

        let mut cmd = Command::new(&spec.executable_path);
        for arg in &spec.invocation_template {
            cmd.arg(
                arg.replace("{driver}", &driver_path.to_string_lossy())
                    .replace("{program}", &program_path.to_string_lossy())
                    .replace("{query}", &query_path.to_string_lossy())
                    .replace("{dir}", &dir.path().to_string_lossy()),
            );
        }
        cmd.current_dir(dir.path()).env_clear().env("HOME", dir.path());
        if let Some(path) = std::env::var_os("PATH") {
            cmd.env("PATH", path);
        }

        let out = match process::run(cmd, limits, &self.pool) {
            Ok(out) => out,
            Err(e) if matches!(e.kind(), std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied) => {
                return Err(SandboxError::BackendUnavailable(format!(
                    "{}: {}",
                    spec.executable_path.display(),
                    e
                )))
            }
            Err(e) => return Err(e.into()),
        };
        drop(dir);
        let mut outcome = classify(&out, &prepared.nonce);
        outcome.wall_time = out.wall_time;
        Ok(outcome)
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

pub fn default_root() -> PathBuf {
    std::env::var_os(SANDBOX_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("verdict-sandbox"))
}

/// Runs on the process-wide sandbox.
pub fn execute(
    code: &str,
    query: &str,
    backend: &Backend,
    limits: &SandboxLimits,
) -> Result<ExecutionOutcome, SandboxError> {
    Sandbox::global().execute(code, query, backend, limits)
}

fn excerpt(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).trim().to_string()
}

fn classify(out: &process::RunOutput, nonce: &str) -> ExecutionOutcome {
    let stderr = excerpt(&out.stderr);
    let with_note = |note: &str| {
        if stderr.is_empty() {
            note.to_string()
        } else {
            format!("{}\n{}", note, stderr)
        }
    };
    if out.timed_out {
        return ExecutionOutcome::without_value(OutcomeKind::Timeout, with_note("wall clock limit exceeded"));
    }
    if out.overflow {
        return ExecutionOutcome::without_value(OutcomeKind::NoOutput, with_note("output limit exceeded"));
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    match driver::find_marker(&stdout, nonce) {
        Some(Marker::Answer(raw)) => ExecutionOutcome {
            kind: OutcomeKind::Success,
            value: Some(normalize_answer(&raw)),
            stderr_excerpt: stderr,
            wall_time: Duration::ZERO,
        },
        Some(Marker::Syntax(detail)) => {
            ExecutionOutcome::without_value(OutcomeKind::SyntaxError, with_note(&format!("syntax error: {}", detail)))
        }
        Some(Marker::Exception(detail)) => {
            ExecutionOutcome::without_value(OutcomeKind::SyntaxError, with_note(&format!("uncaught exception: {}", detail)))
        }
        Some(Marker::Fail) => ExecutionOutcome::without_value(OutcomeKind::NoOutput, with_note("query failed")),
        Some(Marker::Unbound) => {
            ExecutionOutcome::without_value(OutcomeKind::NoOutput, with_note("answer variable left unbound"))
        }
        None if out.crashed() => ExecutionOutcome::without_value(
            OutcomeKind::SyntaxError,
            with_note(&format!("interpreter terminated abnormally: {:?}", out.status)),
        ),
        None => ExecutionOutcome::without_value(OutcomeKind::NoOutput, with_note("no answer printed")),
    }
}
