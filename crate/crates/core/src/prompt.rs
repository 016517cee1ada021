//! Manager prompt rendering and response parsing.
//!
//! The prompt wraps the issue in `[ISSUE]…[/ISSUE]` and each candidate in
//! `[PROPOSAL k]…[/PROPOSAL k]`, then asks for a `Best Proposal: #X` line
//! followed by a golden proposal under `## Problem`, `## Root Cause` and
//! `## Solution` headings.
//!
//! A response is read as:
//!
//! ```text
//! <think> comparative reasoning </think>
//! Best Proposal: #2
//! justification prose ...
//! ## Problem ...
//! ## Root Cause ...
//! ## Solution ...
//! ```
//!
//! Only the first selection line after the think span binds, so the phrase
//! may reappear inside the golden proposal without changing the answer.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{GoldenProposal, IssueRecord, ManagerInstance, ManagerOutput, Proposal};

const ROLE_PREAMBLE: &str = "You are a senior open-source project maintainer responsible for reviewing multiple candidate proposals under a GitHub Issue, selecting the best proposal, and providing a golden proposal that synthesizes the strengths of all proposals. Your response should be well-structured, comprehensive in analysis, and practically implementable in engineering.";

const INSTRUCTIONS: &str = "1. First, select the best candidate proposal , and write it as: Best Proposal: #X\n2. Then, based on the Issue and all candidate proposals, write a Golden Proposal that synthesizes multiple excellent ideas. The structure must strictly follow this format:\n## Problem xx\n## Root Cause xx\n## Solution xx";

/// Appended to the conversation when a response could not be parsed.
pub const FORMAT_REMINDER: &str = "Your previous answer did not follow the required format. Reply with a line `Best Proposal: #X` (X is a candidate number), then a Golden Proposal with `## Problem`, `## Root Cause` and `## Solution` sections.";

/// A rendered manager prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptText {
    pub text: String,
    pub n_candidates: usize,
}

/// Renders the manager prompt for a validated instance.
pub fn render_manager_prompt(instance: &ManagerInstance) -> PromptText {
    render_candidates_prompt(&instance.issue, &instance.proposals)
}

/// Renders the manager prompt for an issue and an ordered candidate list.
/// Candidates are numbered by position, which coincides with `proposal_id`
/// for validated instances.
pub fn render_candidates_prompt(issue: &IssueRecord, proposals: &[Proposal]) -> PromptText {
    let mut text = String::with_capacity(
        1024 + issue.body.len() + proposals.iter().map(|p| p.raw_text.len() + 32).sum::<usize>(),
    );
    text.push_str(ROLE_PREAMBLE);
    text.push_str("\nBelow is a GitHub Issue:\n[ISSUE]\n");
    text.push_str(&issue_text(issue));
    text.push_str("\n[/ISSUE]\nBelow are the candidate proposals:\n");
    for (idx, proposal) in proposals.iter().enumerate() {
        let k = idx + 1;
        text.push_str(&format!("[PROPOSAL {k}]\n"));
        text.push_str(proposal.raw_text.trim_end());
        text.push_str(&format!("\n[/PROPOSAL {k}]\n"));
    }
    text.push('\n');
    text.push_str(INSTRUCTIONS);
    text.push('\n');
    PromptText {
        text,
        n_candidates: proposals.len(),
    }
}

/// Issue title (when present) followed by the body.
pub fn issue_text(issue: &IssueRecord) -> String {
    let body = issue.body.trim_end();
    if issue.title.trim().is_empty() {
        body.to_string()
    } else {
        format!("{}\n\n{}", issue.title.trim(), body)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Section {
    Problem,
    RootCause,
    Solution,
}

impl Section {
    pub const ALL: [Section; 3] = [Section::Problem, Section::RootCause, Section::Solution];

    pub fn heading(self) -> &'static str {
        match self {
            Section::Problem => "Problem",
            Section::RootCause => "Root Cause",
            Section::Solution => "Solution",
        }
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.heading())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no `Best Proposal: #X` line found")]
    MissingSelection,
    #[error("selected proposal #{selected} is outside 1..={n_candidates}")]
    SelectionOutOfRange { selected: u64, n_candidates: usize },
    #[error("golden proposal incomplete; missing sections: {}", join_sections(.0))]
    MissingGolden(Vec<Section>),
}

impl ParseError {
    /// Stable tag used in decision logs.
    pub fn tag(&self) -> &'static str {
        match self {
            ParseError::MissingSelection => "MissingSelection",
            ParseError::SelectionOutOfRange { .. } => "SelectionOutOfRange",
            ParseError::MissingGolden(_) => "MissingGolden",
        }
    }
}

fn join_sections(sections: &[Section]) -> String {
    sections.iter().map(|s| s.heading()).collect::<Vec<_>>().join(", ")
}

static THINK_SPAN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<think>(.*?)</think>").unwrap());

static SELECTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)best[ \t]+proposal[ \t]*\**[ \t]*:[ \t]*\**[ \t]*(#?)[ \t]*(\d+)?").unwrap()
});

static HEADINGS: LazyLock<[Regex; 3]> = LazyLock::new(|| {
    let make = |words: &str| {
        Regex::new(&format!(r"(?im)^[ \t]*##[ \t]*\**[ \t]*{words}\b[ \t]*\**[ \t]*:?")).unwrap()
    };
    [make("problem"), make(r"root[ \t]+cause"), make("solution")]
});

/// Splits `(think, answer)`. A lone closing tag counts as the end of a
/// think span whose opening tag was consumed by the chat template.
fn split_think(text: &str) -> (String, &str) {
    if let Some(caps) = THINK_SPAN.captures(text) {
        let whole = caps.get(0).unwrap();
        return (caps[1].trim().to_string(), &text[whole.end()..]);
    }
    let lower = text.to_ascii_lowercase();
    if !lower.contains("<think>") {
        if let Some(pos) = lower.find("</think>") {
            return (text[..pos].trim().to_string(), &text[pos + "</think>".len()..]);
        }
    }
    (String::new(), text)
}

/// Parses a manager response against a candidate count.
pub fn parse_manager_output(text: &str, n_candidates: usize) -> Result<ManagerOutput, ParseError> {
    let (think, answer) = split_think(text);
    let caps = SELECTION.captures(answer).ok_or(ParseError::MissingSelection)?;
    let digits = caps.get(2).ok_or(ParseError::MissingSelection)?;
    let selected: u64 = digits.as_str().parse().unwrap_or(u64::MAX);
    if selected == 0 || selected > n_candidates as u64 {
        return Err(ParseError::SelectionOutOfRange {
            selected,
            n_candidates,
        });
    }
    // Justification starts on the line after the selection.
    let after_match = &answer[caps.get(0).unwrap().end()..];
    let rest = match after_match.find('\n') {
        Some(nl) => &after_match[nl + 1..],
        None => "",
    };
    let golden = parse_golden_sections(rest)?;
    let golden_start = HEADINGS[0].find(rest).map(|m| m.start()).unwrap_or(rest.len());
    let justification = strip_golden_banner(rest[..golden_start].trim()).to_string();
    Ok(ManagerOutput {
        think,
        selected_id: selected as u32,
        justification,
        golden,
        raw_text: text.to_string(),
    })
}

static GOLDEN_BANNER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(?:\A|\n)[ \t]*#*[ \t]*\**[ \t]*golden[ \t]+proposal[ \t]*\**[ \t]*:?[ \t]*\**[ \t]*\z")
        .unwrap()
});

/// Drops a trailing "Golden Proposal" banner line that sits between the
/// justification and the first section heading.
fn strip_golden_banner(justification: &str) -> &str {
    match GOLDEN_BANNER.find(justification) {
        Some(m) => justification[..m.start()].trim_end(),
        None => justification,
    }
}

/// Extracts the three golden-proposal sections, in order. Each section
/// runs to the next heading or the end of the text.
pub fn parse_golden_sections(text: &str) -> Result<GoldenProposal, ParseError> {
    let mut bounds: Vec<Option<(usize, usize)>> = Vec::with_capacity(3);
    let mut cursor = 0;
    for re in HEADINGS.iter() {
        match re.find_at(text, cursor) {
            Some(m) => {
                bounds.push(Some((m.start(), m.end())));
                cursor = m.end();
            }
            None => bounds.push(None),
        }
    }
    let mut missing = Vec::new();
    let mut contents = Vec::with_capacity(3);
    for (idx, bound) in bounds.iter().enumerate() {
        let section = Section::ALL[idx];
        let Some((_, body_start)) = *bound else {
            missing.push(section);
            contents.push(String::new());
            continue;
        };
        let body_end = bounds[idx + 1..]
            .iter()
            .flatten()
            .map(|(start, _)| *start)
            .next()
            .unwrap_or(text.len());
        let body = text[body_start..body_end].trim();
        if body.is_empty() {
            missing.push(section);
        }
        contents.push(body.to_string());
    }
    if !missing.is_empty() {
        return Err(ParseError::MissingGolden(missing));
    }
    let mut it = contents.into_iter();
    Ok(GoldenProposal {
        problem: it.next().unwrap(),
        root_cause: it.next().unwrap(),
        solution: it.next().unwrap(),
    })
}

/// 1 when the response parses cleanly, else 0.
pub fn format_score(text: &str, n_candidates: usize) -> u8 {
    u8::from(parse_manager_output(text, n_candidates).is_ok())
}

/// Renders a response in the canonical layout the parser reads. Used for
/// mocks, teacher targets and round-trip checks.
pub fn render_canonical_response(
    think: &str,
    selected_id: u32,
    justification: &str,
    golden: &GoldenProposal,
) -> String {
    let mut out = String::new();
    if !think.is_empty() {
        out.push_str(&format!("<think>\n{think}\n</think>\n\n"));
    }
    out.push_str(&format!("Best Proposal: #{selected_id}\n\n"));
    if !justification.is_empty() {
        out.push_str(justification);
        out.push_str("\n\n");
    }
    out.push_str(&golden.to_markdown());
    out
}
