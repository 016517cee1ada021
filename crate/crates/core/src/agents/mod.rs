//! Shell-driven agents: the proposal agent drafts a candidate plan, the
//! implementation agent turns a golden proposal into a patch.
//!
//! # Loop protocol
//!
//! Each model turn must contain exactly one fenced code block holding one
//! shell command. The command runs in the agent's workspace and its output
//! comes back as the next user message. To finish, the model emits a line
//! consisting of `FINAL_ANSWER`; for the proposal agent the text after that
//! line is the proposal in `## Problem` / `## Root Cause` / `## Solution`
//! form. Every model turn is recorded in the transcript, so a transcript
//! never holds more than `max_steps` turns.

mod diff;
mod exec;
mod workspace;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diff::{diff_since_snapshot, parse_unified_diff, snapshot_workspace, DiffError, PatchArtifact};
pub use exec::{execute_command, truncate_observation, CommandOutput, TIMEOUT_EXIT_CODE, TRUNCATION_MARKER};
pub use workspace::copy_workspace;

use crate::llm::{ChatBackend, ChatMessage, ChatRequest, LlmError, SharedBackend};
use crate::model::{GoldenProposal, IssueRecord, Proposal};
use crate::prompt::{issue_text, parse_golden_sections};

pub const SENTINEL: &str = "FINAL_ANSWER";

/// Exit code recorded for a turn whose reply broke the loop protocol.
pub const FORMAT_ERROR_EXIT_CODE: i32 = -2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentLimits {
    pub max_steps: usize,
    pub command_timeout_s: f64,
    pub max_observation_chars: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for AgentLimits {
    fn default() -> Self {
        AgentLimits {
            max_steps: 50,
            command_timeout_s: 60.0,
            max_observation_chars: 10_000,
            temperature: 0.0,
            max_tokens: 4096,
        }
    }
}

impl AgentLimits {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.max_steps == 0 || self.max_observation_chars == 0 || self.command_timeout_s.is_nan() || self.command_timeout_s <= 0.0 {
            return Err(AgentError::InvalidLimits);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub command: String,
    pub stdout: String,
    pub stderr: String,
    pub exit_code: i32,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Submitted,
    StepLimit,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTranscript {
    /// Backend model that drove the episode.
    pub model: String,
    /// The system prompt the episode started from.
    pub system_prompt: String,
    pub turns: Vec<Turn>,
    pub terminal_status: TerminalStatus,
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    step: usize,
    command: &'a str,
    exit_code: i32,
    stdout: &'a str,
    stderr: &'a str,
    truncated: bool,
}

impl AgentTranscript {
    /// One audit line per turn.
    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        for (idx, turn) in self.turns.iter().enumerate() {
            let line = TranscriptLine {
                step: idx + 1,
                command: &turn.command,
                exit_code: turn.exit_code,
                stdout: &turn.stdout,
                stderr: &turn.stderr,
                truncated: turn.truncated,
            };
            serde_json::to_writer(&mut out, &line).expect("transcript serializes");
            out.write_all(b"\n").expect("vec write");
        }
        String::from_utf8(out).expect("utf-8")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("step limit reached without a final answer")]
    StepLimitNoAnswer,
    #[error("final answer is not a well-formed proposal: {0}")]
    MalformedProposal(String),
    #[error("submission produced an empty patch")]
    EmptyPatch,
    #[error("workspace {0} does not exist")]
    WorkspaceMissing(PathBuf),
    #[error("failed to spawn command: {0}")]
    Spawn(String),
    #[error("git: {0}")]
    Git(String),
    #[error("workspace copy failed: {0}")]
    Copy(String),
    #[error("patch is not a valid unified diff: {0}")]
    InvalidDiff(#[from] DiffError),
    #[error("backend failure: {0}")]
    Backend(#[from] LlmError),
    #[error("agent limits must all be positive")]
    InvalidLimits,
    #[error("no proposal survived")]
    EmptyPool,
}

/// A failed episode keeps whatever transcript it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentFailure {
    pub error: AgentError,
    pub transcript: Option<AgentTranscript>,
}

impl AgentFailure {
    fn bare(error: AgentError) -> Self {
        AgentFailure { error, transcript: None }
    }
}

impl std::fmt::Display for AgentFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for AgentFailure {}

const PROTOCOL: &str = "You interact with the repository only through shell commands.
Rules:
- Reply with exactly ONE shell command per turn, inside a single fenced code block (```bash ... ```).
- The command runs from the repository root in a fresh shell; its exit code, stdout and stderr come back in the next message.
- Commands cannot be interactive.
- When you are done, reply with a line containing only FINAL_ANSWER";

pub fn proposal_system_prompt(issue: &IssueRecord) -> String {
    format!(
        "You are a software engineer investigating a GitHub issue. Explore the repository, locate the cause and write a proposal for fixing it. Do not modify any files.\n\n\
         {PROTOCOL}, followed by your proposal in exactly this format:\n\
         ## Problem\n<restatement of the failure and its scope>\n\
         ## Root Cause\n<why the failure happens, with file and function references>\n\
         ## Solution\n<the concrete code changes you propose>\n\n\
         [ISSUE]\n{}\n[/ISSUE]",
        issue_text(issue)
    )
}

pub fn implementation_system_prompt(issue: &IssueRecord, golden: &GoldenProposal) -> String {
    format!(
        "You are a software engineer resolving a GitHub issue. Implement the proposal below by editing files in the repository. Follow it as guidance; keep the change focused.\n\n\
         {PROTOCOL}. Your edits are collected automatically as a diff when you finish.\n\n\
         [ISSUE]\n{}\n[/ISSUE]\n\n[PROPOSAL]\n{}[/PROPOSAL]",
        issue_text(issue),
        golden.to_markdown()
    )
}

const KICKOFF: &str = "Begin. Reply with your first command.";

static FENCED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)```[A-Za-z0-9_+-]*[ \t]*\n(.*?)```").unwrap());

static SENTINEL_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ \t]*FINAL_ANSWER[ \t]*$").unwrap());

enum Reply {
    Submit(String),
    Command(String),
    FormatError(String),
}

fn interpret(reply: &str) -> Reply {
    if let Some(m) = SENTINEL_LINE.find(reply) {
        return Reply::Submit(reply[m.end()..].trim().to_string());
    }
    let blocks: Vec<_> = FENCED.captures_iter(reply).collect();
    match blocks.as_slice() {
        [one] => {
            let cmd = one[1].trim();
            if cmd.is_empty() {
                Reply::FormatError("the code block is empty".into())
            } else {
                Reply::Command(cmd.to_string())
            }
        }
        [] => Reply::FormatError("no fenced code block found".into()),
        many => Reply::FormatError(format!("found {} code blocks; send exactly one", many.len())),
    }
}

fn observation(out: &CommandOutput) -> String {
    format!(
        "<returncode>{}</returncode>\n<stdout>\n{}</stdout>\n<stderr>\n{}</stderr>",
        out.exit_code, out.stdout, out.stderr
    )
}

/// Drives one episode until the model submits or the step budget runs out.
/// Returns the submission text and the transcript.
fn run_episode(
    system_prompt: String,
    workspace: &Path,
    backend: &dyn ChatBackend,
    limits: &AgentLimits,
) -> Result<(String, AgentTranscript), AgentFailure> {
    limits.validate().map_err(AgentFailure::bare)?;
    if !workspace.is_dir() {
        return Err(AgentFailure::bare(AgentError::WorkspaceMissing(workspace.to_path_buf())));
    }
    let mut transcript = AgentTranscript {
        model: backend.model().to_string(),
        system_prompt: system_prompt.clone(),
        turns: Vec::new(),
        terminal_status: TerminalStatus::Aborted,
    };
    let mut messages = vec![ChatMessage::system(system_prompt), ChatMessage::user(KICKOFF)];
    while transcript.turns.len() < limits.max_steps {
        let request = ChatRequest {
            model: backend.model().to_string(),
            messages: messages.clone(),
            temperature: limits.temperature,
            max_tokens: limits.max_tokens,
        };
        let reply = match backend.complete(&request) {
            Ok(resp) => resp.content,
            Err(err) => {
                transcript.terminal_status = TerminalStatus::Aborted;
                return Err(AgentFailure { error: err.into(), transcript: Some(transcript) });
            }
        };
        messages.push(ChatMessage::assistant(reply.clone()));
        match interpret(&reply) {
            Reply::Submit(text) => {
                transcript.turns.push(Turn {
                    command: SENTINEL.to_string(),
                    stdout: String::new(),
                    stderr: String::new(),
                    exit_code: 0,
                    truncated: false,
                });
                transcript.terminal_status = TerminalStatus::Submitted;
                return Ok((text, transcript));
            }
            Reply::FormatError(why) => {
                let note = format!("Format error: {why}. Reply with exactly one fenced shell command, or {SENTINEL}.");
                transcript.turns.push(Turn {
                    command: String::new(),
                    stdout: String::new(),
                    stderr: note.clone(),
                    exit_code: FORMAT_ERROR_EXIT_CODE,
                    truncated: false,
                });
                messages.push(ChatMessage::user(note));
            }
            Reply::Command(command) => {
                let out = match execute_command(&command, workspace, limits) {
                    Ok(out) => out,
                    Err(err) => {
                        transcript.terminal_status = TerminalStatus::Aborted;
                        return Err(AgentFailure { error: err, transcript: Some(transcript) });
                    }
                };
                messages.push(ChatMessage::user(observation(&out)));
                transcript.turns.push(Turn {
                    command,
                    stdout: out.stdout,
                    stderr: out.stderr,
                    exit_code: out.exit_code,
                    truncated: out.truncated,
                });
            }
        }
    }
    transcript.terminal_status = TerminalStatus::StepLimit;
    Err(AgentFailure {
        error: AgentError::StepLimitNoAnswer,
        transcript: Some(transcript),
    })
}

/// Runs the proposal agent on `workspace_dir`. The returned proposal has
/// id 1; pools renumber.
pub fn run_proposal_agent(
    issue: &IssueRecord,
    workspace_dir: &Path,
    backend: &dyn ChatBackend,
    limits: &AgentLimits,
) -> Result<(Proposal, AgentTranscript), AgentFailure> {
    let (text, transcript) = run_episode(proposal_system_prompt(issue), workspace_dir, backend, limits)?;
    match parse_golden_sections(&text) {
        Ok(sections) => {
            let mut proposal = Proposal::new(1, text);
            proposal.problem = Some(sections.problem);
            proposal.root_cause = Some(sections.root_cause);
            proposal.solution = Some(sections.solution);
            Ok((proposal, transcript))
        }
        Err(err) => Err(AgentFailure {
            error: AgentError::MalformedProposal(err.to_string()),
            transcript: Some(transcript),
        }),
    }
}

/// Candidate pool built from one proposal-agent run per backend.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalPool {
    /// Survivors, renumbered 1..=k in backend order.
    pub proposals: Vec<Proposal>,
    /// Backend index each survivor came from.
    pub sources: Vec<usize>,
    /// One entry per backend, in backend order.
    pub transcripts: Vec<Option<AgentTranscript>>,
    pub failures: Vec<(usize, AgentError)>,
}

/// Runs the proposal agent once per backend, each in its own copy of
/// `workspace_dir`, concurrently. Failed runs are dropped with a warning;
/// the pool only errors when nothing survives.
pub fn build_proposal_pool(
    issue: &IssueRecord,
    workspace_dir: &Path,
    backends: &[SharedBackend],
    limits: &AgentLimits,
) -> Result<ProposalPool, AgentFailure> {
    if !workspace_dir.is_dir() {
        return Err(AgentFailure::bare(AgentError::WorkspaceMissing(workspace_dir.to_path_buf())));
    }
    let runs = crate::par::parallel_map(backends, backends.len(), |_, backend| {
        let copy = copy_workspace(workspace_dir).map_err(AgentFailure::bare)?;
        run_proposal_agent(issue, copy.path(), backend.as_ref(), limits)
    });
    let mut pool = ProposalPool {
        proposals: Vec::new(),
        sources: Vec::new(),
        transcripts: Vec::with_capacity(backends.len()),
        failures: Vec::new(),
    };
    for (idx, run) in runs.into_iter().enumerate() {
        match run {
            Ok((mut proposal, transcript)) => {
                proposal.proposal_id = pool.proposals.len() as u32 + 1;
                pool.proposals.push(proposal);
                pool.sources.push(idx);
                pool.transcripts.push(Some(transcript));
            }
            Err(failure) => {
                log::warn!(
                    "issue {}: proposal agent #{} ({}) dropped: {}",
                    issue.id,
                    idx + 1,
                    backends[idx].model(),
                    failure.error
                );
                pool.transcripts.push(failure.transcript);
                pool.failures.push((idx, failure.error));
            }
        }
    }
    if pool.proposals.is_empty() {
        return Err(AgentFailure::bare(AgentError::EmptyPool));
    }
    Ok(pool)
}

/// Runs the implementation agent in `workspace_dir` and returns the diff of
/// everything it changed, computed by git against the starting state.
pub fn run_implementation_agent(
    issue: &IssueRecord,
    golden: &GoldenProposal,
    workspace_dir: &Path,
    backend: &dyn ChatBackend,
    limits: &AgentLimits,
) -> Result<(PatchArtifact, AgentTranscript), AgentFailure> {
    if !workspace_dir.is_dir() {
        return Err(AgentFailure::bare(AgentError::WorkspaceMissing(workspace_dir.to_path_buf())));
    }
    let baseline = snapshot_workspace(workspace_dir).map_err(AgentFailure::bare)?;
    let (_, transcript) = run_episode(
        implementation_system_prompt(issue, golden),
        workspace_dir,
        backend,
        limits,
    )?;
    let with_transcript = |error: AgentError| AgentFailure {
        error,
        transcript: Some(transcript.clone()),
    };
    let diff = diff_since_snapshot(workspace_dir, &baseline).map_err(with_transcript)?;
    if diff.trim().is_empty() {
        return Err(with_transcript(AgentError::EmptyPatch));
    }
    let patch = PatchArtifact::from_diff(diff).map_err(|e| with_transcript(e.into()))?;
    Ok((patch, transcript))
}
