use std::path::PathBuf;
use std::sync::Arc;

use propsel::fixtures::{
    broken_proposal_backend, scripted_implementation_backend, scripted_manager_backend, scripted_proposal_backend,
    seed_workspace, synthetic_issue, unparseable_manager_backend,
};
use propsel::llm::{MockBackend, SharedBackend};
use propsel::model::Money;
use propsel::p2a::{run_p2a, run_p2a_batch, write_p2a_outputs, P2AConfig, P2AStatus};

fn config() -> P2AConfig {
    P2AConfig::new(
        vec![
            scripted_proposal_backend("p-a", "parser"),
            scripted_proposal_backend("p-b", "loader"),
            scripted_proposal_backend("p-c", "cache"),
        ],
        scripted_manager_backend("mgr", 2),
        scripted_implementation_backend("impl"),
    )
    .unwrap()
}

fn workspace(tmp: &tempfile::TempDir, name: &str) -> PathBuf {
    let dir = tmp.path().join(name);
    seed_workspace(&dir, name).unwrap();
    dir
}

fn tree_listing(dir: &std::path::Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn scripted_run_is_patched() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = workspace(&tmp, "repo");
    let before = tree_listing(&ws);
    let issue = synthetic_issue("acme-1", Money(500));
    let result = run_p2a(&issue, &ws, &config());

    assert_eq!(result.status, P2AStatus::Patched, "{:?}", result.failure);
    assert_eq!(result.pool.iter().map(|p| p.proposal_id).collect::<Vec<_>>(), [1, 2, 3]);
    assert_eq!(result.decision.as_ref().unwrap().selected_id(), Some(2));
    let patch = result.patch.as_ref().unwrap();
    assert_eq!(patch.files_touched, ["FIX_NOTES.md"]);
    assert!(patch.diff_text.contains("+Issue acme1 fails"));
    // the input checkout is untouched
    assert_eq!(tree_listing(&ws), before);
}

#[test]
fn implementation_prompt_holds_golden_but_not_candidates() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = workspace(&tmp, "repo");
    let result = run_p2a(&synthetic_issue("acme-2", Money(500)), &ws, &config());
    let prompt = &result.transcripts.implementation.as_ref().unwrap().system_prompt;
    assert!(prompt.contains(&result.golden().unwrap().to_markdown()));
    for proposal in &result.pool {
        assert!(!prompt.contains(proposal.raw_text.trim()), "candidate text leaked into implementation prompt");
    }
}

#[test]
fn pool_of_one_fails_before_manager() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = workspace(&tmp, "repo");
    let manager = scripted_manager_backend("mgr", 1);
    let cfg = P2AConfig {
        proposal_backends: vec![scripted_proposal_backend("p-a", "parser"), broken_proposal_backend("p-b")],
        manager_backend: manager.clone(),
        ..config()
    };
    let result = run_p2a(&synthetic_issue("acme-3", Money(500)), &ws, &cfg);
    assert_eq!(result.status, P2AStatus::PoolFailed);
    assert!(result.decision.is_none());
    assert!(result.patch.is_none());
    assert_eq!(result.transcripts.proposal.len(), 2);
}

#[test]
fn manager_failure_spends_no_implementation_tokens() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = workspace(&tmp, "repo");
    let implementation = Arc::new(MockBackend::sequential("impl", ["FINAL_ANSWER"]));
    let cfg = P2AConfig {
        manager_backend: unparseable_manager_backend("mgr"),
        implementation_backend: implementation.clone() as SharedBackend,
        ..config()
    };
    let result = run_p2a(&synthetic_issue("acme-4", Money(500)), &ws, &cfg);
    assert_eq!(result.status, P2AStatus::ManagerFailed);
    assert!(result.patch.is_none());
    assert!(result.transcripts.implementation.is_none());
    assert_eq!(result.decision.as_ref().unwrap().attempts, 3);
    assert_eq!(implementation.calls(), 0);
}

#[test]
fn batch_isolates_failures_and_is_order_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let issues: Vec<_> = (0..3).map(|i| synthetic_issue(&format!("b-{i}"), Money(100))).collect();
    let mut workspaces: Vec<_> = (0..3).map(|i| workspace(&tmp, &format!("ws{i}"))).collect();
    workspaces[1] = tmp.path().join("missing");
    let results = run_p2a_batch(&issues, &workspaces, &config(), 3).unwrap();
    let statuses: Vec<_> = results.iter().map(|r| r.status).collect();
    assert_eq!(statuses, [P2AStatus::Patched, P2AStatus::PoolFailed, P2AStatus::Patched]);
    assert_eq!(results.iter().map(|r| r.instance_id.as_str()).collect::<Vec<_>>(), ["b-0", "b-1", "b-2"]);

    assert!(run_p2a_batch(&[], &[], &config(), 2).unwrap().is_empty());
    assert!(run_p2a_batch(&issues, &workspaces[..1], &config(), 2).is_err());
}

#[test]
fn parallelism_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let issues: Vec<_> = (0..2).map(|i| synthetic_issue(&format!("d-{i}"), Money(100))).collect();
    let workspaces: Vec<_> = (0..2).map(|i| workspace(&tmp, &format!("ws{i}"))).collect();
    let one = run_p2a_batch(&issues, &workspaces, &config(), 1).unwrap();
    let two = run_p2a_batch(&issues, &workspaces, &config(), 2).unwrap();
    assert_eq!(one, two);

    let (out1, out2) = (tmp.path().join("out1"), tmp.path().join("out2"));
    write_p2a_outputs(&one, &issues, &out1).unwrap();
    write_p2a_outputs(&two, &issues, &out2).unwrap();
    assert_eq!(tree_listing(&out1), tree_listing(&out2));
    let results = std::fs::read_to_string(out1.join("results.jsonl")).unwrap();
    assert!(results.contains("\"diff_path\":\"diffs/d-0.diff\""));
    assert!(out1.join("transcripts/d-0/implementation.jsonl").is_file());
    assert!(std::fs::read_to_string(out1.join("verdicts_skeleton.jsonl")).unwrap().contains("\"passed\":null"));
}

#[test]
fn seeded_shuffle_renumbers_pool() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = workspace(&tmp, "repo");
    let cfg = P2AConfig { shuffle_seed: Some(11), ..config() };
    let a = run_p2a(&synthetic_issue("s-1", Money(1)), &ws, &cfg);
    let b = run_p2a(&synthetic_issue("s-1", Money(1)), &ws, &cfg);
    assert_eq!(a.pool_sources, b.pool_sources);
    let mut sorted = a.pool_sources.clone();
    sorted.sort();
    assert_eq!(sorted, [0, 1, 2]);
    assert_eq!(a.pool.iter().map(|p| p.proposal_id).collect::<Vec<_>>(), [1, 2, 3]);
}

#[test]
fn too_few_backends_rejected() {
    assert!(P2AConfig::new(
        vec![scripted_proposal_backend("p", "x")],
        scripted_manager_backend("m", 1),
        scripted_implementation_backend("i"),
    )
    .is_err());
}
