//! Directory-scoped shell executor.

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{AgentError, AgentLimits};

/// Exit code reported for a command killed by the timeout.
pub const TIMEOUT_EXIT_CODE: i32 = -1;

pub const TRUNCATION_MARKER: &str = "…[truncated]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandOutput {
    pub stdout: String,
    pub stderr: String,
    pub exit_code: i32,
    pub truncated: bool,
    pub timed_out: bool,
}

/// Runs `command` with `sh -c` inside `workspace_dir`, killing its whole
/// process group once `limits.command_timeout_s` elapses.
pub fn execute_command(
    command: &str,
    workspace_dir: &Path,
    limits: &AgentLimits,
) -> Result<CommandOutput, AgentError> {
    if !workspace_dir.is_dir() {
        return Err(AgentError::WorkspaceMissing(workspace_dir.to_path_buf()));
    }
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .current_dir(workspace_dir)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()
        .map_err(|e| AgentError::Spawn(e.to_string()))?;

    let mut stdout_pipe = child.stdout.take().expect("stdout piped");
    let mut stderr_pipe = child.stderr.take().expect("stderr piped");
    let stdout_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout_pipe.read_to_end(&mut buf);
        buf
    });
    let stderr_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr_pipe.read_to_end(&mut buf);
        buf
    });

    let deadline = Instant::now() + Duration::from_secs_f64(limits.command_timeout_s);
    let mut timed_out = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if Instant::now() >= deadline => {
                timed_out = true;
                kill_group(child.id());
                let _ = child.wait();
                break None;
            }
            Ok(None) => thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(AgentError::Spawn(e.to_string())),
        }
    };
    // Background children that outlive `sh` keep the pipes open.
    if !timed_out {
        kill_group(child.id());
    }
    let stdout = String::from_utf8_lossy(&stdout_reader.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&stderr_reader.join().unwrap_or_default()).into_owned();

    let (stdout, cut_out) = truncate_observation(stdout, limits.max_observation_chars);
    let (mut stderr, cut_err) = truncate_observation(stderr, limits.max_observation_chars);
    if timed_out {
        if !stderr.is_empty() && !stderr.ends_with('\n') {
            stderr.push('\n');
        }
        stderr.push_str(&format!(
            "command killed after {}s timeout\n",
            limits.command_timeout_s
        ));
    }
    let exit_code = match status {
        Some(s) => s.code().unwrap_or(TIMEOUT_EXIT_CODE),
        None => TIMEOUT_EXIT_CODE,
    };
    Ok(CommandOutput {
        stdout,
        stderr,
        exit_code,
        truncated: cut_out || cut_err,
        timed_out,
    })
}

fn kill_group(pid: u32) {
    // SAFETY: plain syscall on a process group we created; failure (group
    // already gone) is harmless.
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
}

/// Keeps the first `limit` characters and appends [`TRUNCATION_MARKER`].
pub fn truncate_observation(text: String, limit: usize) -> (String, bool) {
    match text.char_indices().nth(limit) {
        None => (text, false),
        Some((byte_idx, _)) => {
            let mut cut = text;
            cut.truncate(byte_idx);
            cut.push_str(TRUNCATION_MARKER);
            (cut, true)
        }
    }
}
