//! Proposal → selection → implementation, end to end.
//!
//! 1. Every proposal backend drafts a proposal in its own workspace copy.
//! 2. The manager selects among the survivors and writes a golden proposal.
//! 3. The implementation agent sees only the issue and that golden proposal
//!    and edits a fresh copy; the result is a unified diff.
//!
//! A failing stage ends the instance with the matching status. Input
//! workspaces are never modified.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agents::{
    build_proposal_pool, copy_workspace, run_implementation_agent, AgentLimits, AgentTranscript, PatchArtifact,
};
use crate::llm::{backend_from_value_seeded, LlmError, SharedBackend};
use crate::manager::{decide_candidates, Decision, DecisionRecord, ManagerRunConfig};
use crate::model::{GoldenProposal, IssueRecord, Money, Proposal};
use crate::par::parallel_map;

#[derive(Debug, Error)]
pub enum P2AError {
    #[error("need at least two proposal backends, got {0}")]
    TooFewProposalBackends(usize),
    #[error("{instances} instances but {workspaces} workspaces")]
    WorkspaceCountMismatch { instances: usize, workspaces: usize },
    #[error("invalid agent limits")]
    InvalidLimits,
    #[error("backend config: {0}")]
    Backend(#[from] LlmError),
    #[error("config: {0}")]
    Config(String),
    #[error("writing results: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone)]
pub struct P2AConfig {
    pub proposal_backends: Vec<SharedBackend>,
    pub manager_backend: SharedBackend,
    pub implementation_backend: SharedBackend,
    pub agent_limits: AgentLimits,
    pub manager_config: ManagerRunConfig,
    /// Shuffle each pool before the manager sees it. `None` keeps backend
    /// order.
    pub shuffle_seed: Option<u64>,
}

impl P2AConfig {
    pub fn new(
        proposal_backends: Vec<SharedBackend>,
        manager_backend: SharedBackend,
        implementation_backend: SharedBackend,
    ) -> Result<Self, P2AError> {
        let config = P2AConfig {
            proposal_backends,
            manager_backend,
            implementation_backend,
            agent_limits: AgentLimits::default(),
            manager_config: ManagerRunConfig::default(),
            shuffle_seed: None,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), P2AError> {
        if self.proposal_backends.len() < 2 {
            return Err(P2AError::TooFewProposalBackends(self.proposal_backends.len()));
        }
        self.agent_limits.validate().map_err(|_| P2AError::InvalidLimits)
    }

    /// Builds a config from JSON of the form
    /// `{"proposal_backends": [..], "manager_backend": {..},
    ///   "implementation_backend": {..}, "agent_limits": {..},
    ///   "manager_config": {..}, "shuffle_pool": bool, "shuffle_seed": n}`.
    ///
    /// `seed` seeds HTTP retry jitter and, when `shuffle_pool` is set
    /// without an explicit `shuffle_seed`, the pool shuffle.
    pub fn from_json(value: &Value, seed: Option<u64>) -> Result<Self, P2AError> {
        let derive = |k: u64| seed.map(|s| s.wrapping_add(k));
        let backends = value
            .get("proposal_backends")
            .and_then(Value::as_array)
            .ok_or_else(|| P2AError::Config("`proposal_backends` must be an array".into()))?
            .iter()
            .enumerate()
            .map(|(k, v)| backend_from_value_seeded(v, derive(k as u64 + 2)))
            .collect::<Result<Vec<_>, _>>()?;
        let single = |key: &str, k: u64| -> Result<SharedBackend, P2AError> {
            let v = value.get(key).ok_or_else(|| P2AError::Config(format!("missing `{key}`")))?;
            Ok(backend_from_value_seeded(v, derive(k))?)
        };
        let section = |key: &str| value.get(key).cloned().unwrap_or(Value::Object(Default::default()));
        let config = P2AConfig {
            proposal_backends: backends,
            manager_backend: single("manager_backend", 0)?,
            implementation_backend: single("implementation_backend", 1)?,
            agent_limits: serde_json::from_value(section("agent_limits"))
                .map_err(|e| P2AError::Config(format!("agent_limits: {e}")))?,
            manager_config: serde_json::from_value(section("manager_config"))
                .map_err(|e| P2AError::Config(format!("manager_config: {e}")))?,
            shuffle_seed: match value.get("shuffle_seed").and_then(Value::as_u64) {
                Some(explicit) => Some(explicit),
                None if value.get("shuffle_pool").and_then(Value::as_bool) == Some(true) => Some(seed.unwrap_or(0)),
                None => None,
            },
        };
        config.validate()?;
        Ok(config)
    }

    pub fn backend_models(&self) -> Vec<String> {
        self.proposal_backends
            .iter()
            .chain([&self.manager_backend, &self.implementation_backend])
            .map(|b| b.model().to_string())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum P2AStatus {
    Patched,
    PoolFailed,
    ManagerFailed,
    ImplFailed,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct P2ATranscripts {
    /// One slot per proposal backend, in configuration order.
    pub proposal: Vec<Option<AgentTranscript>>,
    pub implementation: Option<AgentTranscript>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct P2AResult {
    pub instance_id: String,
    pub pool: Vec<Proposal>,
    /// Proposal backend index behind each pool entry.
    pub pool_sources: Vec<usize>,
    pub decision: Option<Decision>,
    pub patch: Option<PatchArtifact>,
    pub transcripts: P2ATranscripts,
    pub status: P2AStatus,
    pub failure: Option<String>,
}

impl P2AResult {
    pub fn golden(&self) -> Option<&GoldenProposal> {
        self.decision.as_ref()?.output.as_ref().map(|o| &o.golden)
    }

    fn pending(instance_id: &str) -> Self {
        P2AResult {
            instance_id: instance_id.to_string(),
            pool: Vec::new(),
            pool_sources: Vec::new(),
            decision: None,
            patch: None,
            transcripts: P2ATranscripts::default(),
            status: P2AStatus::PoolFailed,
            failure: None,
        }
    }
}

fn instance_seed(seed: u64, instance_id: &str) -> u64 {
    // FNV-1a over the id, mixed with the run seed
    instance_id
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64 ^ seed, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Runs the three stages for one issue.
pub fn run_p2a(issue: &IssueRecord, workspace_dir: &Path, config: &P2AConfig) -> P2AResult {
    let mut result = P2AResult::pending(&issue.id);

    let pool = match build_proposal_pool(issue, workspace_dir, &config.proposal_backends, &config.agent_limits) {
        Ok(pool) => pool,
        Err(failure) => {
            result.status = P2AStatus::PoolFailed;
            result.failure = Some(failure.to_string());
            return result;
        }
    };
    result.transcripts.proposal = pool.transcripts;
    let mut entries: Vec<(Proposal, usize)> = pool.proposals.into_iter().zip(pool.sources).collect();
    if let Some(seed) = config.shuffle_seed {
        entries.shuffle(&mut StdRng::seed_from_u64(instance_seed(seed, &issue.id)));
    }
    for (idx, (proposal, _)) in entries.iter_mut().enumerate() {
        proposal.proposal_id = idx as u32 + 1;
    }
    (result.pool, result.pool_sources) = entries.into_iter().unzip();
    if result.pool.len() < 2 {
        result.status = P2AStatus::PoolFailed;
        result.failure = Some(format!(
            "only {} proposal(s) survived; the manager needs at least 2",
            result.pool.len()
        ));
        return result;
    }

    let decision = decide_candidates(issue, &result.pool, config.manager_backend.as_ref(), &config.manager_config);
    let golden = match (&decision.output, &decision.error) {
        (Some(out), None) => out.golden.clone(),
        (_, err) => {
            result.status = P2AStatus::ManagerFailed;
            result.failure = Some(match (err, &decision.detail) {
                (Some(e), Some(d)) => format!("{}: {d}", e.tag()),
                (Some(e), None) => e.tag().to_string(),
                _ => "no decision".to_string(),
            });
            result.decision = Some(decision);
            return result;
        }
    };
    result.decision = Some(decision);

    let copy = match copy_workspace(workspace_dir) {
        Ok(copy) => copy,
        Err(err) => {
            result.status = P2AStatus::ImplFailed;
            result.failure = Some(err.to_string());
            return result;
        }
    };
    match run_implementation_agent(
        issue,
        &golden,
        copy.path(),
        config.implementation_backend.as_ref(),
        &config.agent_limits,
    ) {
        Ok((patch, transcript)) => {
            result.patch = Some(patch);
            result.transcripts.implementation = Some(transcript);
            result.status = P2AStatus::Patched;
        }
        Err(failure) => {
            result.status = P2AStatus::ImplFailed;
            result.failure = Some(failure.error.to_string());
            result.transcripts.implementation = failure.transcript;
        }
    }
    result
}

/// Runs [`run_p2a`] over paired issues and workspaces, up to `parallelism`
/// at a time. Result order follows input order.
pub fn run_p2a_batch(
    issues: &[IssueRecord],
    workspaces: &[PathBuf],
    config: &P2AConfig,
    parallelism: usize,
) -> Result<Vec<P2AResult>, P2AError> {
    if issues.len() != workspaces.len() {
        return Err(P2AError::WorkspaceCountMismatch {
            instances: issues.len(),
            workspaces: workspaces.len(),
        });
    }
    config.validate()?;
    let pairs: Vec<(&IssueRecord, &PathBuf)> = issues.iter().zip(workspaces).collect();
    Ok(parallel_map(&pairs, parallelism, |_, (issue, ws)| run_p2a(issue, ws, config)))
}

/// Verdict line awaiting an external verifier; `passed` is null.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictSkeleton {
    pub instance_id: String,
    pub passed: Option<bool>,
    pub price_usd: Money,
}

pub fn verdict_skeletons(issues: &[IssueRecord]) -> Vec<VerdictSkeleton> {
    issues
        .iter()
        .map(|i| VerdictSkeleton {
            instance_id: i.id.clone(),
            passed: None,
            price_usd: i.price,
        })
        .collect()
}

/// One line of `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P2ARecord {
    pub instance_id: String,
    pub status: P2AStatus,
    pub pool: Vec<Proposal>,
    pub pool_sources: Vec<usize>,
    pub decision: Option<DecisionRecord>,
    pub golden: Option<GoldenProposal>,
    pub diff_path: Option<String>,
    pub files_touched: Vec<String>,
    pub transcript_paths: TranscriptPaths,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptPaths {
    pub proposal: Vec<Option<String>>,
    pub implementation: Option<String>,
}

/// File-name-safe rendering of an instance id.
pub fn path_component(id: &str) -> String {
    let cleaned: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    match cleaned.trim_matches('.') {
        "" => "_".to_string(),
        s => s.to_string(),
    }
}

impl P2AResult {
    /// The log record, with artifact paths relative to the output dir.
    pub fn to_record(&self) -> P2ARecord {
        let stem = path_component(&self.instance_id);
        let transcript_path = |name: String| format!("transcripts/{stem}/{name}.jsonl");
        P2ARecord {
            instance_id: self.instance_id.clone(),
            status: self.status,
            pool: self.pool.clone(),
            pool_sources: self.pool_sources.clone(),
            decision: self.decision.as_ref().map(Decision::to_record),
            golden: self.golden().cloned(),
            diff_path: self.patch.as_ref().map(|_| format!("diffs/{stem}.diff")),
            files_touched: self.patch.as_ref().map(|p| p.files_touched.clone()).unwrap_or_default(),
            transcript_paths: TranscriptPaths {
                proposal: self
                    .transcripts
                    .proposal
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t.as_ref().map(|_| transcript_path(format!("proposal_{}", k + 1))))
                    .collect(),
                implementation: self
                    .transcripts
                    .implementation
                    .as_ref()
                    .map(|_| transcript_path("implementation".into())),
            },
            failure: self.failure.clone(),
        }
    }
}

/// Writes `results.jsonl`, `verdicts_skeleton.jsonl`, `diffs/` and
/// `transcripts/` under `out_dir`.
pub fn write_p2a_outputs(results: &[P2AResult], issues: &[IssueRecord], out_dir: &Path) -> io::Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut lines = String::new();
    for result in results {
        let record = result.to_record();
        if let (Some(path), Some(patch)) = (&record.diff_path, &result.patch) {
            write_file(&out_dir.join(path), &patch.diff_text)?;
        }
        for (path, transcript) in record.transcript_paths.proposal.iter().zip(&result.transcripts.proposal) {
            if let (Some(path), Some(t)) = (path, transcript) {
                write_file(&out_dir.join(path), &t.to_jsonl())?;
            }
        }
        if let (Some(path), Some(t)) = (&record.transcript_paths.implementation, &result.transcripts.implementation) {
            write_file(&out_dir.join(path), &t.to_jsonl())?;
        }
        lines.push_str(&serde_json::to_string(&record).map_err(io::Error::other)?);
        lines.push('\n');
    }
    write_file(&out_dir.join("results.jsonl"), &lines)?;
    write_file(
        &out_dir.join("verdicts_skeleton.jsonl"),
        &crate::model::to_jsonl_string(&verdict_skeletons(issues)),
    )
}

fn write_file(path: &Path, contents: &str) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)
}
