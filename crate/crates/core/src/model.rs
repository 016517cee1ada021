//! Canonical data types shared by the selection engine, the agents and the
//! benchmark harness.
//!
//! A [`ManagerInstance`] is one issue together with its candidate proposals
//! and the maintainer-selected proposal id. Instances travel as JSONL, one
//! object per line, with unknown keys carried through untouched.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Whole US dollars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(pub u64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn dollars(self) -> u64 {
        self.0
    }
}

impl Add for Money {
    type Output = Money;

    fn add(self, rhs: Money) -> Money {
        Money(self.0.checked_add(rhs.0).expect("dollar total overflowed u64"))
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        *self = *self + rhs;
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        iter.copied().sum()
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // $264,500 style grouping
        let digits = self.0.to_string();
        let mut out = String::with_capacity(digits.len() + digits.len() / 3 + 1);
        for (i, ch) in digits.chars().enumerate() {
            if i > 0 && (digits.len() - i).is_multiple_of(3) {
                out.push(',');
            }
            out.push(ch);
        }
        write!(f, "${out}")
    }
}

/// A GitHub issue with its payout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub id: String,
    pub repo: String,
    pub issue_number: u64,
    pub title: String,
    pub body: String,
    #[serde(rename = "price_usd")]
    pub price: Money,
}

/// One candidate proposal. `raw_text` is what the prompts see; the
/// structured fields are optional because scraped proposals are often
/// free-form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub proposal_id: u32,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_cause: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<String>,
    /// Keys this crate does not interpret (author handles, timestamps, ...).
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Proposal {
    pub fn new(proposal_id: u32, raw_text: impl Into<String>) -> Self {
        Proposal {
            proposal_id,
            raw_text: raw_text.into(),
            problem: None,
            root_cause: None,
            solution: None,
            extra: Map::new(),
        }
    }

    /// Builds a proposal whose raw text is the canonical three-section
    /// rendering of `golden`.
    pub fn from_sections(proposal_id: u32, golden: &GoldenProposal) -> Self {
        Proposal {
            proposal_id,
            raw_text: golden.to_markdown(),
            problem: Some(golden.problem.clone()),
            root_cause: Some(golden.root_cause.clone()),
            solution: Some(golden.solution.clone()),
            extra: Map::new(),
        }
    }
}

/// An issue, its N ≥ 2 candidates (ids exactly 1..=N) and the ground-truth id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManagerInstance {
    #[serde(flatten)]
    pub issue: IssueRecord,
    pub proposals: Vec<Proposal>,
    pub ground_truth_id: u32,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ManagerInstance {
    pub fn id(&self) -> &str {
        &self.issue.id
    }

    pub fn price(&self) -> Money {
        self.issue.price
    }

    pub fn n_candidates(&self) -> usize {
        self.proposals.len()
    }

    pub fn ground_truth(&self) -> Option<&Proposal> {
        self.proposals.iter().find(|p| p.proposal_id == self.ground_truth_id)
    }
}

/// The synthesized plan: `## Problem`, `## Root Cause`, `## Solution`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenProposal {
    pub problem: String,
    pub root_cause: String,
    pub solution: String,
}

impl GoldenProposal {
    pub fn new(
        problem: impl Into<String>,
        root_cause: impl Into<String>,
        solution: impl Into<String>,
    ) -> Self {
        GoldenProposal {
            problem: problem.into(),
            root_cause: root_cause.into(),
            solution: solution.into(),
        }
    }

    pub fn to_markdown(&self) -> String {
        format!(
            "## Problem\n{}\n\n## Root Cause\n{}\n\n## Solution\n{}\n",
            self.problem, self.root_cause, self.solution
        )
    }
}

/// A parsed manager response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManagerOutput {
    pub think: String,
    pub selected_id: u32,
    pub justification: String,
    pub golden: GoldenProposal,
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("instance {id}: needs at least two proposals, found {found}")]
    TooFewProposals { id: String, found: usize },
    #[error("instance {id}: proposal ids must be exactly 1..={n}, found {found:?}")]
    NonContiguousIds { id: String, n: usize, found: Vec<u32> },
    #[error("instance {id}: ground_truth_id {ground_truth_id} outside 1..={n}")]
    GroundTruthOutOfRange { id: String, ground_truth_id: u32, n: usize },
    #[error("instance {id}: field `{field}` must be non-empty")]
    EmptyField { id: String, field: String },
    #[error("instance {id}: duplicate (repo, issue_number) = ({repo}, {issue_number}) in dataset")]
    DuplicateIssue { id: String, repo: String, issue_number: u64 },
    #[error("duplicate instance id {id}")]
    DuplicateId { id: String },
}

/// Checks every [`ManagerInstance`] invariant and hands the instance back
/// unchanged when they hold.
pub fn validate_instance(instance: ManagerInstance) -> Result<ManagerInstance, ValidationError> {
    check_instance(&instance)?;
    Ok(instance)
}

pub fn check_instance(instance: &ManagerInstance) -> Result<(), ValidationError> {
    let id = instance.issue.id.clone();
    let empty = |field: &str| ValidationError::EmptyField {
        id: id.clone(),
        field: field.to_string(),
    };
    if id.trim().is_empty() {
        return Err(empty("id"));
    }
    if instance.issue.issue_number == 0 {
        return Err(empty("issue_number"));
    }
    let n = instance.proposals.len();
    if n < 2 {
        return Err(ValidationError::TooFewProposals { id, found: n });
    }
    let ids: Vec<u32> = instance.proposals.iter().map(|p| p.proposal_id).collect();
    if ids.iter().enumerate().any(|(i, &pid)| pid as usize != i + 1) {
        return Err(ValidationError::NonContiguousIds { id, n, found: ids });
    }
    if instance.ground_truth_id == 0 || instance.ground_truth_id as usize > n {
        return Err(ValidationError::GroundTruthOutOfRange {
            id,
            ground_truth_id: instance.ground_truth_id,
            n,
        });
    }
    for p in &instance.proposals {
        let k = p.proposal_id;
        if p.raw_text.trim().is_empty() {
            return Err(empty(&format!("proposals[{k}].raw_text")));
        }
        for (name, value) in [
            ("problem", &p.problem),
            ("root_cause", &p.root_cause),
            ("solution", &p.solution),
        ] {
            if matches!(value, Some(v) if v.trim().is_empty()) {
                return Err(empty(&format!("proposals[{k}].{name}")));
            }
        }
    }
    Ok(())
}

/// Validates each instance plus the dataset-level uniqueness constraints.
pub fn validate_dataset(instances: &[ManagerInstance]) -> Result<(), ValidationError> {
    let mut ids = HashSet::new();
    let mut issues = HashSet::new();
    for inst in instances {
        check_instance(inst)?;
        if !ids.insert(inst.issue.id.as_str()) {
            return Err(ValidationError::DuplicateId {
                id: inst.issue.id.clone(),
            });
        }
        if !issues.insert((inst.issue.repo.as_str(), inst.issue.issue_number)) {
            return Err(ValidationError::DuplicateIssue {
                id: inst.issue.id.clone(),
                repo: inst.issue.repo.clone(),
                issue_number: inst.issue.issue_number,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    pub n_issues: usize,
    pub n_proposals: usize,
    pub total_price: Money,
    /// Instance count keyed by proposal count N.
    pub proposal_count_histogram: BTreeMap<usize, usize>,
}

pub fn dataset_stats(instances: &[ManagerInstance]) -> DatasetStats {
    let mut histogram = BTreeMap::new();
    for inst in instances {
        *histogram.entry(inst.proposals.len()).or_insert(0) += 1;
    }
    DatasetStats {
        n_issues: instances.len(),
        n_proposals: instances.iter().map(|i| i.proposals.len()).sum(),
        total_price: instances.iter().map(|i| i.price()).sum(),
        proposal_count_histogram: histogram,
    }
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| JsonlError::Io {
        path: display.clone(),
        source,
    })?;
    read_jsonl_from(std::io::BufReader::new(file), &display)
}

pub fn read_jsonl_from<T: serde::de::DeserializeOwned, R: BufRead>(
    reader: R,
    label: &str,
) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| JsonlError::Io {
            path: label.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|source| JsonlError::Parse {
            path: label.to_string(),
            line: idx + 1,
            source,
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, item)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn to_jsonl_string<T: Serialize>(items: &[T]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, items).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn instance(id: &str, n: u32, gt: u32, price: u64) -> ManagerInstance {
        ManagerInstance {
            issue: IssueRecord {
                id: id.into(),
                repo: "acme/app".into(),
                issue_number: 1,
                title: "t".into(),
                body: "b".into(),
                price: Money(price),
            },
            proposals: (1..=n).map(|k| Proposal::new(k, format!("proposal {k}"))).collect(),
            ground_truth_id: gt,
            extra: Map::new(),
        }
    }

    #[test]
    fn minimal_instance_is_valid() {
        assert!(validate_instance(instance("a", 2, 2, 250)).is_ok());
    }

    #[test]
    fn single_proposal_rejected() {
        let err = validate_instance(instance("a", 1, 1, 250)).unwrap_err();
        assert!(matches!(err, ValidationError::TooFewProposals { found: 1, .. }));
        assert!(err.to_string().contains("instance a"));
    }

    #[test]
    fn ground_truth_bound() {
        let err = validate_instance(instance("a", 3, 5, 250)).unwrap_err();
        assert!(matches!(err, ValidationError::GroundTruthOutOfRange { ground_truth_id: 5, .. }));
        let err = validate_instance(instance("a", 3, 0, 250)).unwrap_err();
        assert!(matches!(err, ValidationError::GroundTruthOutOfRange { .. }));
    }

    #[test]
    fn non_contiguous_ids() {
        let mut inst = instance("a", 3, 1, 250);
        inst.proposals[2].proposal_id = 4;
        assert!(matches!(
            validate_instance(inst).unwrap_err(),
            ValidationError::NonContiguousIds { .. }
        ));
    }

    #[test]
    fn empty_fields() {
        let mut inst = instance("a", 2, 1, 250);
        inst.proposals[1].raw_text = "  ".into();
        assert!(matches!(
            validate_instance(inst).unwrap_err(),
            ValidationError::EmptyField { field, .. } if field == "proposals[2].raw_text"
        ));
        let mut inst = instance("a", 2, 1, 250);
        inst.proposals[0].solution = Some(String::new());
        assert!(matches!(
            validate_instance(inst).unwrap_err(),
            ValidationError::EmptyField { .. }
        ));
        assert!(matches!(
            validate_instance(instance("", 2, 1, 250)).unwrap_err(),
            ValidationError::EmptyField { field, .. } if field == "id"
        ));
    }

    #[test]
    fn duplicate_issue_in_dataset() {
        let a = instance("a", 2, 1, 250);
        let b = instance("b", 2, 1, 250);
        assert!(matches!(
            validate_dataset(&[a, b]).unwrap_err(),
            ValidationError::DuplicateIssue { .. }
        ));
    }

    #[test]
    fn stats_examples() {
        let empty = dataset_stats(&[]);
        assert_eq!(empty.n_issues, 0);
        assert_eq!(empty.n_proposals, 0);
        assert_eq!(empty.total_price, Money(0));
        assert!(empty.proposal_count_histogram.is_empty());

        let stats = dataset_stats(&[instance("a", 2, 1, 250), instance("b", 3, 1, 500)]);
        assert_eq!(stats.n_issues, 2);
        assert_eq!(stats.n_proposals, 5);
        assert_eq!(stats.total_price, Money(750));
        assert_eq!(
            stats.proposal_count_histogram,
            BTreeMap::from([(2, 1), (3, 1)])
        );
    }

    #[test]
    fn unknown_keys_survive_round_trip() {
        let line = r#"{"id":"x","repo":"r","issue_number":3,"title":"t","body":"b","price_usd":250,"proposals":[{"proposal_id":1,"raw_text":"p1","author":"someone"},{"proposal_id":2,"raw_text":"p2"}],"ground_truth_id":2,"source":"scrape-7"}"#;
        let inst: ManagerInstance = serde_json::from_str(line).unwrap();
        assert_eq!(inst.extra["source"], "scrape-7");
        assert_eq!(inst.proposals[0].extra["author"], "someone");
        let back: Value = serde_json::to_value(&inst).unwrap();
        let orig: Value = serde_json::from_str(line).unwrap();
        assert_eq!(back, orig);
    }

    #[test]
    fn money_display() {
        assert_eq!(Money(264_500).to_string(), "$264,500");
        assert_eq!(Money(250).to_string(), "$250");
        assert_eq!(Money(0).to_string(), "$0");
        assert_eq!(Money(1_000_000).to_string(), "$1,000,000");
    }
}
