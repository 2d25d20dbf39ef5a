//! Harness configuration: a TOML file, then environment, then CLI flags.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use verdict_core::corpus::bundled_rosetta_dir;
use verdict_core::sandbox::{default_root, SANDBOX_DIR_ENV};
use verdict_core::{BackendId, DatasetId, InterpreterBackend, LengthRewardConfig, SandboxLimits};

pub const CONFIG_ENV: &str = "VERDICT_CONFIG";
pub const BIND_ENV: &str = "VERDICT_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub backends: Vec<BackendConfig>,
    pub sandbox: SandboxConfig,
    pub length_reward: LengthRewardConfig,
    /// Required number of completions per score request; any size when unset.
    pub group_size: Option<usize>,
    /// Interpreter processes allowed at once; the CPU count when unset.
    pub workers: Option<usize>,
    /// Dataset id to JSONL file (or task-pack directory).
    pub datasets: BTreeMap<String, PathBuf>,
    pub report_dir: PathBuf,
    pub bind: String,
    pub score_log: Option<PathBuf>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            backends: vec![BackendConfig::discover(BackendId::LogicProlog)],
            sandbox: SandboxConfig::default(),
            length_reward: LengthRewardConfig::default(),
            group_size: None,
            workers: None,
            datasets: BTreeMap::new(),
            report_dir: PathBuf::from("reports"),
            bind: DEFAULT_BIND.into(),
            score_log: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub id: BackendId,
    /// Looked up on PATH (or the bundled interpreter) when unset.
    #[serde(default)]
    pub executable_path: Option<PathBuf>,
    #[serde(default)]
    pub program_file_extension: Option<String>,
    #[serde(default)]
    pub invocation_template: Option<Vec<String>>,
}

impl BackendConfig {
    pub fn discover(id: BackendId) -> Self {
        Self {
            id,
            executable_path: None,
            program_file_extension: None,
            invocation_template: None,
        }
    }

    pub fn at(id: BackendId, path: impl Into<PathBuf>) -> Self {
        Self {
            executable_path: Some(path.into()),
            ..Self::discover(id)
        }
    }

    /// The launch spec, or why no interpreter could be found.
    pub fn resolve(&self) -> Result<InterpreterBackend, String> {
        let mut spec = match &self.executable_path {
            Some(path) => match self.id {
                BackendId::LogicProlog => InterpreterBackend::prolog(path),
                BackendId::FunctionalLisp => InterpreterBackend::lisp(path),
            },
            None => InterpreterBackend::discover(self.id)
                .ok_or_else(|| format!("no interpreter found for {}", self.id))?,
        };
        if let Some(ext) = &self.program_file_extension {
            spec.program_file_extension = ext.clone();
        }
        if let Some(template) = &self.invocation_template {
            spec.invocation_template = template.clone();
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandboxConfig {
    pub timeout_secs: f64,
    pub memory_mb: u64,
    pub max_output_bytes: usize,
    /// Parent of the per-run temp dirs; `VERDICT_SANDBOX_DIR` or the system
    /// temp dir when unset.
    pub root: Option<PathBuf>,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        let limits = SandboxLimits::default();
        Self {
            timeout_secs: limits.wall_timeout.as_secs_f64(),
            memory_mb: limits.memory_cap / (1024 * 1024),
            max_output_bytes: limits.max_output,
            root: None,
        }
    }
}

impl SandboxConfig {
    pub fn limits(&self) -> SandboxLimits {
        SandboxLimits {
            wall_timeout: Duration::from_secs_f64(self.timeout_secs),
            memory_cap: self.memory_mb * 1024 * 1024,
            max_output: self.max_output_bytes,
        }
    }

    pub fn root(&self) -> PathBuf {
        self.root.clone().unwrap_or_else(default_root)
    }
}

impl HarnessConfig {
    /// Reads `path`, or the file named by `VERDICT_CONFIG`, or the defaults,
    /// then applies environment overrides. Not validated yet.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let mut config = match path.map(Path::to_path_buf).or(from_env) {
            Some(path) => Self::from_file(&path)?,
            None => Self::default(),
        };
        if let Some(bind) = std::env::var_os(BIND_ENV) {
            config.bind = bind.to_string_lossy().into_owned();
        }
        if let Some(root) = std::env::var_os(SANDBOX_DIR_ENV) {
            config.sandbox.root = Some(PathBuf::from(root));
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        let t = self.sandbox.timeout_secs;
        if !t.is_finite() || t <= 0.0 || t > 3600.0 {
            return invalid(format!("sandbox.timeout_secs must be in (0, 3600], got {}", t));
        }
        self.sandbox.limits().validate().map_err(ConfigError::Invalid)?;
        if self.sandbox.max_output_bytes == 0 {
            return invalid("sandbox.max_output_bytes must be positive".into());
        }
        self.length_reward.validate().map_err(ConfigError::Invalid)?;
        if self.group_size == Some(0) {
            return invalid("group_size must be positive".into());
        }
        if self.workers == Some(0) {
            return invalid("workers must be positive".into());
        }
        if self.bind.parse::<SocketAddr>().is_err() {
            return invalid(format!("bind {:?} is not a socket address", self.bind));
        }
        if self.backends.is_empty() {
            return invalid("at least one backend must be configured".into());
        }
        let mut seen = BTreeSet::new();
        for b in &self.backends {
            if !seen.insert(b.id) {
                return invalid(format!("backend {} is configured twice", b.id));
            }
            if b.invocation_template.as_ref().is_some_and(Vec::is_empty) {
                return invalid(format!("backend {} has an empty invocation_template", b.id));
            }
        }
        for key in self.datasets.keys() {
            key.parse::<DatasetId>()
                .map_err(|e| ConfigError::Invalid(format!("datasets: {}", e)))?;
        }
        Ok(())
    }

    /// Where `dataset` is read from. The task pack falls back to the bundled one.
    pub fn dataset_path(&self, dataset: DatasetId) -> Option<PathBuf> {
        self.datasets.get(dataset.as_str()).cloned().or_else(|| {
            (dataset == DatasetId::Rosetta20).then(bundled_rosetta_dir)
        })
    }

    pub fn wall_timeout(&self) -> Duration {
        self.sandbox.limits().wall_timeout
    }
}
