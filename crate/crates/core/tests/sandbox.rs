mod common;

use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::Path;
use std::time::{Duration, Instant};

use verdict_core::sandbox::{register_backend, BackendId, InterpreterBackend, OutcomeKind, SandboxLimits};
use verdict_core::{AnswerValue, SandboxError};

fn limits(secs: f64) -> SandboxLimits {
    SandboxLimits {
        wall_timeout: Duration::from_secs_f64(secs),
        ..SandboxLimits::default()
    }
}

fn write_script(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
    path
}

fn leftover_entries(sandbox: &verdict_core::Sandbox) -> usize {
    fs::read_dir(sandbox.root()).map(|d| d.count()).unwrap_or(0)
}

#[test]
fn arithmetic_program_succeeds() {
    let (sandbox, _root) = common::sandbox(2);
    let backend = common::prolog();
    let out = sandbox
        .execute("total(X) :- X is 3+4.", "total(X).", &backend, &limits(5.0))
        .unwrap();
    assert_eq!(out.kind, OutcomeKind::Success);
    assert_eq!(out.value, Some(AnswerValue::from(7)));
    assert_eq!(leftover_entries(&sandbox), 0);
}

#[test]
fn looping_program_times_out_within_grace() {
    let (sandbox, _root) = common::sandbox(1);
    let backend = common::prolog();
    let started = Instant::now();
    let out = sandbox
        .execute("loop :- loop.", "loop, X = 1.", &backend, &SandboxLimits::default())
        .unwrap();
    let elapsed = started.elapsed();
    assert_eq!(out.kind, OutcomeKind::Timeout);
    assert!(out.wall_time >= Duration::from_secs(5), "{:?}", out.wall_time);
    assert!(elapsed < Duration::from_secs(6), "{:?}", elapsed);
    assert_eq!(out.value, None);
}

#[test]
fn malformed_program_is_a_syntax_error() {
    let (sandbox, _root) = common::sandbox(1);
    let backend = common::prolog();
    let out = sandbox
        .execute("total(X :- X is 1.", "total(X).", &backend, &limits(5.0))
        .unwrap();
    assert_eq!(out.kind, OutcomeKind::SyntaxError);
    assert!(out.stderr_excerpt.contains("syntax"), "{}", out.stderr_excerpt);
}

#[test]
fn query_without_variable_is_a_syntax_error_without_spawning() {
    let (sandbox, _root) = common::sandbox(1);
    let backend = common::prolog();
    sandbox.pool().reset_peak();
    let out = sandbox.execute("ok.", "ok.", &backend, &limits(5.0)).unwrap();
    assert_eq!(out.kind, OutcomeKind::SyntaxError);
    assert_eq!(sandbox.pool().peak(), 0);
}

#[test]
fn classification_table() {
    let (sandbox, _root) = common::sandbox(4);
    let backend = common::prolog();
    let cases: &[(&str, &str, OutcomeKind)] = &[
        ("p(1).", "p(2), X = 1.", OutcomeKind::NoOutput),
        ("p(_).", "p(X).", OutcomeKind::NoOutput),
        ("p(1).", "p(X), Y is X / 0.", OutcomeKind::SyntaxError),
        ("p(X) :- undefined_pred(X).", "p(X).", OutcomeKind::SyntaxError),
        ("p(X) :- X = [1,2,3].", "?- p(X)", OutcomeKind::Success),
        ("p(X) :- X is 2.5 * 2.", "p(X).", OutcomeKind::Success),
        ("spam :- repeat, write(xxxxxxxxxxxxxxxx), fail.", "spam, X = 1.", OutcomeKind::NoOutput),
        ("p(X) :- halt(3), X = 1.", "p(X).", OutcomeKind::SyntaxError),
        ("p(X) :- write(hello), halt, X = 1.", "p(X).", OutcomeKind::NoOutput),
        ("big(L) :- numlist(1, 100000000, L).", "big(L).", OutcomeKind::SyntaxError),
    ];
    for (code, query, expected) in cases {
        let out = sandbox.execute(code, query, &backend, &limits(5.0)).unwrap();
        assert_eq!(out.kind, *expected, "{} / {}: {:?}", code, query, out);
        assert_eq!(out.value.is_some(), *expected == OutcomeKind::Success);
    }
    assert_eq!(leftover_entries(&sandbox), 0);
}

#[test]
fn decimal_and_literal_answers_are_normalized() {
    let (sandbox, _root) = common::sandbox(2);
    let backend = common::prolog();
    let run = |code: &str| sandbox.execute(code, "p(X).", &backend, &limits(5.0)).unwrap().value;
    assert_eq!(run("p(X) :- X is 10 / 4."), Some(AnswerValue::Decimal(2.5)));
    assert_eq!(run("p(X) :- X is 18.0."), Some(AnswerValue::from(18)));
    assert_eq!(run("p(yes)."), Some(AnswerValue::Literal("yes".into())));
    assert_eq!(run("p(X) :- X is 2 ** 100."), Some(AnswerValue::from("1267650600228229401496703205376")));
}

#[test]
fn concurrent_runs_do_not_see_each_other() {
    let (sandbox, _root) = common::sandbox(8);
    let backend = common::prolog();
    std::thread::scope(|scope| {
        for i in 0..16 {
            let (sandbox, backend) = (&sandbox, &backend);
            scope.spawn(move || {
                let code = format!(
                    "p(X) :- open('mark.txt', write, S), write(S, 'm{i}'), write(S, '.'), close(S), \
                     sleep(0.05), open('mark.txt', read, R), read(R, X), close(R)."
                );
                let out = sandbox.execute(&code, "p(X).", backend, &limits(5.0)).unwrap();
                assert_eq!(out.value, Some(AnswerValue::Literal(format!("m{i}"))));
            });
        }
    });
    assert_eq!(leftover_entries(&sandbox), 0);
}

#[test]
fn repeated_runs_are_deterministic() {
    let (sandbox, _root) = common::sandbox(2);
    let backend = common::prolog();
    let code = "fib(0, 0). fib(1, 1). fib(N, F) :- N > 1, A is N-1, B is N-2, fib(A, FA), fib(B, FB), F is FA+FB.";
    let first = sandbox.execute(code, "fib(15, F).", &backend, &limits(5.0)).unwrap();
    assert_eq!(first.value, Some(AnswerValue::from(610)));
    for _ in 0..9 {
        let again = sandbox.execute(code, "fib(15, F).", &backend, &limits(5.0)).unwrap();
        assert_eq!((again.kind, &again.value), (first.kind, &first.value));
    }
}

#[test]
fn missing_executable_is_unavailable() {
    let err = register_backend(InterpreterBackend::prolog("/nonexistent/swipl")).unwrap_err();
    assert!(matches!(err, SandboxError::BackendUnavailable(_)));
}

#[test]
fn probe_that_hangs_is_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let stub = write_script(dir.path(), "stuck", "#!/bin/sh\nexec sleep 100\n");
    let started = Instant::now();
    let err = register_backend(InterpreterBackend::prolog(&stub)).unwrap_err();
    assert!(matches!(err, SandboxError::BackendUnavailable(_)));
    assert!(started.elapsed() < Duration::from_secs(3));
}

#[test]
fn executable_removed_after_registration_is_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("prolog-copy");
    fs::copy(common::interpreter_path(), &copy).unwrap();
    let backend = register_backend(InterpreterBackend::prolog(&copy)).unwrap();
    assert!(backend.probe().version.contains("verdict-prolog"));
    fs::remove_file(&copy).unwrap();
    let (sandbox, _root) = common::sandbox(1);
    let err = sandbox.execute("p(1).", "p(X).", &backend, &limits(1.0)).unwrap_err();
    assert!(matches!(err, SandboxError::BackendUnavailable(_)));
}

/// Stand-in for a Lisp interpreter: prints the query text as the answer.
const FAKE_LISP: &str = r#"#!/bin/sh
if [ "$1" = "--version" ]; then echo "FAKE LISP 1.0"; exit 0; fi
nonce=$(sed -n 's/.*VERDICT_\([0-9a-f]*\)_.*/\1/p' "$2" | head -n 1)
[ -f program.lisp ] || exit 9
printf '\nVERDICT_%s_LOADED \nVERDICT_%s_END\n' "$nonce" "$nonce"
printf '\nVERDICT_%s_ANSWER %s\nVERDICT_%s_END\n' "$nonce" "$(cat query.lisp)" "$nonce"
"#;

#[test]
fn lisp_backend_uses_the_marker_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let fake = write_script(dir.path(), "sbcl", FAKE_LISP);
    let backend = register_backend(InterpreterBackend::lisp(&fake)).unwrap();
    assert_eq!(backend.id(), BackendId::FunctionalLisp);
    assert_eq!(backend.probe().version, "FAKE LISP 1.0");
    let (sandbox, _root) = common::sandbox(1);
    let out = sandbox
        .execute("(defun f () 42)", "  42 ", &backend, &limits(2.0))
        .unwrap();
    assert_eq!(out.kind, OutcomeKind::Success);
    assert_eq!(out.value, Some(AnswerValue::from(42)));
}

#[test]
fn grandchildren_are_killed_with_the_group() {
    let dir = tempfile::tempdir().unwrap();
    let pidfile = dir.path().join("child.pid");
    let script = format!(
        "#!/bin/sh\nif [ \"$1\" = \"--version\" ]; then echo ok; exit 0; fi\nsleep 60 &\necho $! > {}\nwait\n",
        pidfile.display()
    );
    let fake = write_script(dir.path(), "spawner", &script);
    let backend = register_backend(InterpreterBackend::prolog(&fake)).unwrap();
    let (sandbox, _root) = common::sandbox(1);
    let out = sandbox.execute("", "p(X).", &backend, &limits(0.5)).unwrap();
    assert_eq!(out.kind, OutcomeKind::Timeout);
    let pid: i32 = fs::read_to_string(&pidfile).unwrap().trim().parse().unwrap();
    std::thread::sleep(Duration::from_millis(50));
    assert!(!is_running(pid), "background child survived");
}

/// Alive and not a zombie waiting for init to reap it.
fn is_running(pid: i32) -> bool {
    fs::read_to_string(format!("/proc/{}/stat", pid))
        .ok()
        .and_then(|stat| stat.rsplit_once(')').map(|(_, rest)| rest.trim_start().starts_with('Z')))
        .map(|zombie| !zombie)
        .unwrap_or(false)
}
