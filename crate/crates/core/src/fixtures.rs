//! Synthetic data for examples, tests and dry runs.

use std::sync::Arc;

use serde_json::Map;

use crate::llm::{ChatRequest, MockBackend, Role, SharedBackend};
use crate::model::{GoldenProposal, IssueRecord, ManagerInstance, Money, Proposal};
use crate::prompt::render_canonical_response;

/// `n` amounts that sum exactly to `total`, as even as possible, each a
/// multiple of `quantum` when `total` is.
///
/// # Panics
/// When `n == 0` with a non-zero total, or `quantum == 0`.
pub fn spread(total: Money, n: usize, quantum: u64) -> Vec<Money> {
    assert!(quantum > 0, "quantum must be positive");
    if n == 0 {
        assert_eq!(total, Money::ZERO, "cannot spread a non-zero total over nothing");
        return Vec::new();
    }
    let units = total.0 / quantum;
    let leftover = total.0 % quantum;
    let base = units / n as u64;
    let extra = (units % n as u64) as usize;
    let mut out: Vec<Money> = (0..n)
        .map(|i| Money((base + u64::from(i < extra)) * quantum))
        .collect();
    out[0] = Money(out[0].0 + leftover);
    out
}

pub fn synthetic_issue(id: &str, price: Money) -> IssueRecord {
    IssueRecord {
        id: id.to_string(),
        repo: "example/app".to_string(),
        issue_number: issue_number_for(id),
        title: format!("Issue {id}"),
        body: format!("Steps to reproduce the failure reported in {id}."),
        price,
    }
}

fn issue_number_for(id: &str) -> u64 {
    // stable, non-zero, distinct for distinct short ids
    id.bytes().fold(17u64, |h, b| h.wrapping_mul(31).wrapping_add(u64::from(b))) % 1_000_000_007 + 1
}

/// A valid instance with `n` proposals and the given ground truth.
pub fn synthetic_instance(id: &str, n: usize, ground_truth_id: u32, price: Money) -> ManagerInstance {
    ManagerInstance {
        issue: synthetic_issue(id, price),
        proposals: (1..=n as u32)
            .map(|k| Proposal::new(k, format!("Candidate {k} for {id}: adjust module {k}.")))
            .collect(),
        ground_truth_id,
        extra: Map::new(),
    }
}

pub fn sample_golden(tag: &str) -> GoldenProposal {
    GoldenProposal::new(
        format!("The {tag} handler crashes on empty input."),
        format!("The {tag} parser assumes at least one element."),
        format!("Guard the {tag} parser and add a regression test."),
    )
}

/// Text between `open` and `close` in the system message, if any.
fn system_section<'a>(req: &'a ChatRequest, open: &str, close: &str) -> Option<&'a str> {
    let system = req.messages.iter().find(|m| m.role == Role::System)?;
    let start = system.content.find(open)? + open.len();
    let end = system.content[start..].find(close)? + start;
    Some(system.content[start..end].trim())
}

fn first_line(text: &str) -> &str {
    text.lines().next().unwrap_or("").trim()
}

/// Proposal agent that lists the repository once, then submits a proposal
/// naming the issue and `angle`.
pub fn scripted_proposal_backend(model: &str, angle: &str) -> SharedBackend {
    let angle = angle.to_string();
    Arc::new(MockBackend::responder(model, move |req| {
        if req.messages.len() <= 2 {
            return Some("Let me look around.\n```bash\nls\n```".to_string());
        }
        let issue = first_line(system_section(req, "[ISSUE]", "[/ISSUE]").unwrap_or(""));
        Some(format!(
            "FINAL_ANSWER\n## Problem\n{issue} fails.\n## Root Cause\nThe {angle} path skips validation.\n## Solution\nValidate input in the {angle} path.\n"
        ))
    }))
}

/// Proposal agent that never produces a parseable proposal.
pub fn broken_proposal_backend(model: &str) -> SharedBackend {
    Arc::new(MockBackend::responder(model, |_| Some("FINAL_ANSWER\nno idea".to_string())))
}

/// Manager that always picks candidate `pick` and restates the issue in its
/// golden proposal.
pub fn scripted_manager_backend(model: &str, pick: u32) -> SharedBackend {
    Arc::new(MockBackend::responder(model, move |req| {
        // retries append reminders, so look for the message carrying the issue
        let prompt = &req.messages.iter().find(|m| m.content.contains("[ISSUE]"))?.content;
        let start = prompt.find("[ISSUE]")? + "[ISSUE]".len();
        let issue = first_line(prompt[start..].trim_start()).to_string();
        Some(render_canonical_response(
            "Candidate proposals differ in scope; the narrow one is safest.",
            pick,
            "It fixes the root cause with the smallest change.",
            &GoldenProposal::new(
                format!("{issue} fails."),
                "Input is not validated.",
                "Validate input and add a regression test.",
            ),
        ))
    }))
}

/// Manager whose replies never parse.
pub fn unparseable_manager_backend(model: &str) -> SharedBackend {
    Arc::new(MockBackend::responder(model, |_| Some("I like all of them.".to_string())))
}

/// Implementation agent that writes one file derived from the golden
/// proposal, then submits.
pub fn scripted_implementation_backend(model: &str) -> SharedBackend {
    Arc::new(MockBackend::responder(model, |req| {
        if req.messages.len() <= 2 {
            let problem = system_section(req, "## Problem", "## Root Cause").unwrap_or("fix");
            let safe: String = problem.chars().filter(|c| c.is_ascii_alphanumeric() || *c == ' ').collect();
            return Some(format!("```bash\nprintf '%s\\n' '{safe}' > FIX_NOTES.md\n```"));
        }
        Some("FINAL_ANSWER".to_string())
    }))
}

/// Creates a tiny repository checkout under `dir`.
pub fn seed_workspace(dir: &std::path::Path, name: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(dir.join("src"))?;
    std::fs::write(dir.join("README.md"), format!("# {name}\n"))?;
    std::fs::write(dir.join("src/lib.rs"), "pub fn parse(input: &str) -> usize {\n    input.len()\n}\n")
}
