#![allow(dead_code)]

use std::path::PathBuf;
use std::process::Command;
use std::sync::OnceLock;

use verdict_core::sandbox::{bundled_prolog, register_backend, Backend, InterpreterBackend, Sandbox};

/// Path to the bundled interpreter, building it first when a lone
/// `cargo test -p verdict-core` has not produced it yet.
pub fn interpreter_path() -> PathBuf {
    static PATH: OnceLock<PathBuf> = OnceLock::new();
    PATH.get_or_init(|| {
        if let Some(found) = bundled_prolog() {
            return found;
        }
        let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
        let status = Command::new(cargo)
            .args(["build", "-p", "verdict-prolog", "--bin", "verdict-prolog"])
            .status()
            .expect("run cargo build for the bundled interpreter");
        assert!(status.success(), "building verdict-prolog failed");
        bundled_prolog().expect("verdict-prolog next to the test binary")
    })
    .clone()
}

pub fn prolog() -> Backend {
    register_backend(InterpreterBackend::prolog(interpreter_path())).expect("bundled interpreter registers")
}

/// Sandbox rooted in a fresh directory so residue checks see only this test.
pub fn sandbox(workers: usize) -> (Sandbox, tempfile::TempDir) {
    let root = tempfile::tempdir().expect("sandbox root");
    (Sandbox::new(workers, root.path().join("runs")), root)
}

#[derive(Debug, serde::Deserialize)]
pub struct GoldenFile {
    pub schema_version: u32,
    pub cases: Vec<GoldenCase>,
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct GoldenCase {
    pub name: String,
    pub question: String,
    pub ground_truth: verdict_core::AnswerValue,
    pub completion: String,
    pub expected: GoldenExpected,
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct GoldenExpected {
    pub outcome: verdict_core::OutcomeKind,
    pub xmlcount: f64,
    pub strict_format: f64,
    pub soft_format: f64,
    pub correctness: f64,
    pub total: f64,
}

impl GoldenCase {
    pub fn problem(&self) -> verdict_core::Problem {
        verdict_core::Problem::new(self.name.clone(), self.question.clone(), self.ground_truth.clone())
    }
}

pub fn golden() -> Vec<GoldenCase> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden.json");
    let file: GoldenFile = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(file.schema_version, 1);
    file.cases
}
