//! Spawning, watching and killing one interpreter subprocess.

use std::io::{self, Read};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::pool::WorkerPool;
use super::SandboxLimits;

const STDERR_KEEP: usize = 2048;
/// How long to wait for pipe readers once the process group is gone.
const DRAIN_GRACE: Duration = Duration::from_millis(500);

#[derive(Debug)]
pub(crate) struct RunOutput {
    pub status: Option<ExitStatus>,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub timed_out: bool,
    pub overflow: bool,
    pub wall_time: Duration,
}

impl RunOutput {
    pub fn crashed(&self) -> bool {
        match self.status {
            Some(status) => status.signal().is_some() || status.code() != Some(0),
            None => true,
        }
    }
}

fn apply_limits(cmd: &mut Command, memory_cap: u64, cpu_secs: u64) {
    cmd.process_group(0);
    // SAFETY: only async-signal-safe libc calls between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            let cap = libc::rlimit {
                rlim_cur: memory_cap as libc::rlim_t,
                rlim_max: memory_cap as libc::rlim_t,
            };
            if libc::setrlimit(libc::RLIMIT_AS, &cap) != 0 {
                return Err(io::Error::last_os_error());
            }
            let no_core = libc::rlimit {
                rlim_cur: 0,
                rlim_max: 0,
            };
            libc::setrlimit(libc::RLIMIT_CORE, &no_core);
            // backstop for a harness that dies before it can kill the group
            let cpu = libc::rlimit {
                rlim_cur: cpu_secs as libc::rlim_t,
                rlim_max: cpu_secs as libc::rlim_t + 1,
            };
            libc::setrlimit(libc::RLIMIT_CPU, &cpu);
            Ok(())
        });
    }
}

fn kill_group(pgid: u32) {
    // SAFETY: plain syscall; ESRCH when the group is already empty is fine.
    unsafe {
        libc::killpg(pgid as libc::pid_t, libc::SIGKILL);
    }
}

/// True once the child has exited. The zombie is left in place so its pid,
/// and therefore the process group id, cannot be reused before we kill the
/// group.
fn has_exited(pid: u32) -> bool {
    // SAFETY: waitid writes into a zeroed siginfo_t we own.
    unsafe {
        let mut info: libc::siginfo_t = std::mem::zeroed();
        let rc = libc::waitid(
            libc::P_PID,
            pid as libc::id_t,
            &mut info,
            libc::WEXITED | libc::WNOHANG | libc::WNOWAIT,
        );
        rc == 0 && info.si_pid() != 0
    }
}

fn spawn_reader<R: Read + Send + 'static>(
    mut source: R,
    keep: usize,
    overflow: Option<Arc<AtomicBool>>,
) -> mpsc::Receiver<Vec<u8>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut chunk = [0u8; 8192];
        loop {
            match source.read(&mut chunk) {
                Ok(0) => break,
                Ok(n) => {
                    let room = keep.saturating_sub(kept.len());
                    kept.extend_from_slice(&chunk[..n.min(room)]);
                    if n > room {
                        if let Some(flag) = &overflow {
                            flag.store(true, Ordering::SeqCst);
                        }
                    }
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(_) => break,
            }
        }
        let _ = tx.send(kept);
    });
    rx
}

/// Runs `cmd` to completion or until the wall clock or output cap is hit.
/// The whole process group is killed before returning.
pub(crate) fn run(
    mut cmd: Command,
    limits: &SandboxLimits,
    pool: &WorkerPool,
) -> io::Result<RunOutput> {
    cmd.stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    apply_limits(&mut cmd, limits.memory_cap, limits.wall_timeout.as_secs() + 2);

    let started = Instant::now();
    let mut child: Child = cmd.spawn()?;
    pool.process_started();
    let pid = child.id();

    let overflow = Arc::new(AtomicBool::new(false));
    let stdout_rx = spawn_reader(
        child.stdout.take().expect("stdout piped"),
        limits.max_output,
        Some(overflow.clone()),
    );
    let stderr_rx = spawn_reader(child.stderr.take().expect("stderr piped"), STDERR_KEEP, None);

    let deadline = started + limits.wall_timeout;
    let mut timed_out = false;
    let mut nap = Duration::from_micros(200);
    loop {
        if has_exited(pid) {
            break;
        }
        if overflow.load(Ordering::SeqCst) {
            break;
        }
        let now = Instant::now();
        if now >= deadline {
            timed_out = true;
            break;
        }
        thread::sleep(nap.min(deadline - now));
        nap = (nap * 2).min(Duration::from_millis(10));
    }
    let wall_time = started.elapsed();

    kill_group(pid);
    let status = child.wait();
    pool.process_reaped();
    let status = status?;

    let drain_until = Instant::now() + DRAIN_GRACE;
    let stdout = stdout_rx
        .recv_timeout(drain_until.saturating_duration_since(Instant::now()))
        .unwrap_or_default();
    let stderr = stderr_rx
        .recv_timeout(drain_until.saturating_duration_since(Instant::now()))
        .unwrap_or_default();

    Ok(RunOutput {
        status: Some(status),
        stdout,
        stderr,
        timed_out,
        overflow: overflow.load(Ordering::SeqCst),
        wall_time,
    })
}
