#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use verdict::config::BackendConfig;
use verdict::{HarnessConfig, ScoreRequest};
use verdict_core::sandbox::bundled_prolog;
use verdict_core::BackendId;

/// The bundled interpreter, built first when only this package was asked for.
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

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

/// Config pointing at the bundled interpreter, with every output under `dir`.
pub fn config(dir: &Path) -> HarnessConfig {
    HarnessConfig {
        backends: vec![BackendConfig::at(BackendId::LogicProlog, interpreter_path())],
        workers: Some(4),
        report_dir: dir.join("reports"),
        sandbox: verdict::config::SandboxConfig {
            root: Some(dir.join("sandbox")),
            ..Default::default()
        },
        ..HarnessConfig::default()
    }
}

pub fn write_config(dir: &Path, config: &HarnessConfig) -> PathBuf {
    let path = dir.join("verdict.toml");
    std::fs::write(&path, toml::to_string(config).unwrap()).unwrap();
    path
}

pub fn golden_request() -> ScoreRequest {
    serde_json::from_str(&std::fs::read_to_string(fixture("golden_group.json")).unwrap()).unwrap()
}

#[derive(Debug, serde::Deserialize)]
pub struct GoldenGroup {
    pub totals: Vec<f64>,
    pub breakdowns: Vec<verdict_core::Breakdown>,
    pub outcomes: Vec<verdict_core::OutcomeKind>,
    pub answers: Vec<Option<verdict_core::AnswerValue>>,
    pub advantages: Vec<f64>,
}

pub fn golden_expected() -> GoldenGroup {
    serde_json::from_str(&std::fs::read_to_string(fixture("golden_group.expected.json")).unwrap()).unwrap()
}

/// Runs the CLI with a clean environment for the variables it reads.
pub fn verdict(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_verdict"))
        .args(args)
        .env_remove("VERDICT_CONFIG")
        .env_remove("VERDICT_BIND")
        .env_remove("VERDICT_SANDBOX_DIR")
        .output()
        .expect("run verdict")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A launcher that segfaults itself when the program mentions `crash_now`
/// and otherwise hands over to the bundled interpreter.
pub fn crashing_interpreter(dir: &Path) -> PathBuf {
    use std::os::unix::fs::PermissionsExt;
    let path = dir.join("crashing-prolog");
    let script = format!(
        "#!/bin/sh\n\
         for a in \"$@\"; do last=\"$a\"; done\n\
         if [ \"$1\" != \"--version\" ] && grep -q crash_now \"$(dirname \"$last\")/program.pl\"; then kill -SEGV $$; fi\n\
         exec {} \"$@\"\n",
        interpreter_path().display()
    );
    std::fs::write(&path, script).unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    path
}
