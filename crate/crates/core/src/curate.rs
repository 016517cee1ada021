//! Dataset curation: sample sizing, leakage filtering, teacher annotation,
//! prompt-length statistics and the selection-rationale taxonomy.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatBackend, ChatMessage};
use crate::manager::{query_until_parsed, DecisionError, ManagerRunConfig};
use crate::model::{IssueRecord, ManagerInstance};
use crate::par::parallel_map;
use crate::prompt::{parse_manager_output, render_manager_prompt};
use crate::reward::ReferenceAnnotation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurateError {
    #[error("margin must lie strictly between 0 and 1, got {0}")]
    InvalidMargin(f64),
    #[error("population must be at least 1")]
    InvalidPopulation,
    #[error("unsupported confidence level {0}; use 0.90, 0.95 or 0.99")]
    UnsupportedConfidence(f64),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("instance {id}: teacher output unusable after {attempts} attempts: {detail}")]
    TeacherFormatFailure { id: String, attempts: u32, detail: String },
    #[error("instance {id}: teacher kept selecting #{selected} instead of #{expected}")]
    TeacherDisagreement { id: String, selected: u32, expected: u32 },
    #[error("instance {id}: teacher backend failed: {detail}")]
    TeacherBackend { id: String, detail: String },
    #[error("criterion {criterion:?} belongs to {expected:?}, not {given:?}")]
    ThemeMismatch { criterion: Criterion, expected: Theme, given: Theme },
}

// ---- sample size ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Confidence {
    P90,
    P95,
    P99,
}

impl Confidence {
    /// Two-sided standard-normal quantile.
    pub fn z(self) -> f64 {
        match self {
            Confidence::P90 => 1.645,
            Confidence::P95 => 1.960,
            Confidence::P99 => 2.576,
        }
    }

    pub const ALL: [Confidence; 3] = [Confidence::P90, Confidence::P95, Confidence::P99];
}

impl TryFrom<f64> for Confidence {
    type Error = CurateError;

    fn try_from(level: f64) -> Result<Self, CurateError> {
        let close = |x: f64| (level - x).abs() < 1e-9;
        if close(0.90) {
            Ok(Confidence::P90)
        } else if close(0.95) {
            Ok(Confidence::P95)
        } else if close(0.99) {
            Ok(Confidence::P99)
        } else {
            Err(CurateError::UnsupportedConfidence(level))
        }
    }
}

/// Finite-population sample size `⌈X·N / (X + N − 1)⌉` with
/// `X = z²·p(1−p)/e²` and `p = 0.5`.
pub fn required_sample_size(population: u64, margin: f64, confidence: Confidence) -> Result<u64, CurateError> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(CurateError::InvalidMargin(margin));
    }
    if population == 0 {
        return Err(CurateError::InvalidPopulation);
    }
    let z = confidence.z();
    let x = z * z * 0.25 / (margin * margin);
    let n = population as f64;
    let size = (x * n / (x + n - 1.0)).ceil() as u64;
    Ok(size.clamp(1, population))
}

// ---- leakage ----

/// Identifiers of benchmark issues that must not appear in training data.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BenchmarkKeys {
    pub ids: HashSet<String>,
    pub issues: HashSet<(String, u64)>,
}

impl BenchmarkKeys {
    pub fn from_issues<'a>(issues: impl IntoIterator<Item = &'a IssueRecord>) -> Self {
        let mut keys = BenchmarkKeys::default();
        for issue in issues {
            keys.ids.insert(issue.id.clone());
            keys.issues.insert((issue.repo.clone(), issue.issue_number));
        }
        keys
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedInstance {
    pub id: String,
    pub repo: String,
    pub issue_number: u64,
    pub matched_id: bool,
    pub matched_issue: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub n_input: usize,
    pub n_kept: usize,
    pub removed: Vec<RemovedInstance>,
}

impl LeakageReport {
    pub fn removed_ids(&self) -> Vec<&str> {
        self.removed.iter().map(|r| r.id.as_str()).collect()
    }
}

/// Drops every training instance whose id or `(repo, issue_number)` is a
/// benchmark key. Order of the survivors is preserved.
pub fn filter_leakage(train: Vec<ManagerInstance>, keys: &BenchmarkKeys) -> (Vec<ManagerInstance>, LeakageReport) {
    let n_input = train.len();
    let mut removed = Vec::new();
    let kept: Vec<ManagerInstance> = train
        .into_iter()
        .filter(|inst| {
            let matched_id = keys.ids.contains(&inst.issue.id);
            let matched_issue = keys.issues.contains(&(inst.issue.repo.clone(), inst.issue.issue_number));
            if matched_id || matched_issue {
                removed.push(RemovedInstance {
                    id: inst.issue.id.clone(),
                    repo: inst.issue.repo.clone(),
                    issue_number: inst.issue.issue_number,
                    matched_id,
                    matched_issue,
                });
                false
            } else {
                true
            }
        })
        .collect();
    let report = LeakageReport {
        n_input,
        n_kept: kept.len(),
        removed,
    };
    (kept, report)
}

// ---- teacher annotation ----

/// A training instance plus its teacher-written reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedInstance {
    #[serde(flatten)]
    pub instance: ManagerInstance,
    pub reference: ReferenceAnnotation,
    pub teacher_model: String,
}

pub fn teacher_prompt(instance: &ManagerInstance) -> String {
    let gt = instance.ground_truth_id;
    format!(
        "{}\nThe maintainers ultimately chose Proposal #{gt}. Explain that decision as if you reached it yourself: \
         put your comparison of the candidates inside <think>...</think>, then write `Best Proposal: #{gt}`, \
         a concise justification, and the Golden Proposal in the format above.\n",
        render_manager_prompt(instance).text
    )
}

enum TeacherRejection {
    Format,
    Disagree(u32),
    Backend,
}

impl From<DecisionError> for TeacherRejection {
    fn from(err: DecisionError) -> Self {
        match err {
            DecisionError::BackendFailure => TeacherRejection::Backend,
            _ => TeacherRejection::Format,
        }
    }
}

/// Asks the teacher for a ground-truth-consistent think trace,
/// justification and golden proposal, re-asking on format errors or a
/// contradicting selection.
pub fn build_sft_target(
    instance: &ManagerInstance,
    teacher: &dyn ChatBackend,
    config: &ManagerRunConfig,
) -> Result<AnnotatedInstance, CurateError> {
    let n = instance.n_candidates();
    let expected = instance.ground_truth_id;
    let messages = vec![ChatMessage::user(teacher_prompt(instance))];
    let outcome = query_until_parsed(teacher, config, messages, |text| {
        let out = parse_manager_output(text, n).map_err(|e| (TeacherRejection::Format, e.to_string()))?;
        if out.selected_id != expected {
            return Err((
                TeacherRejection::Disagree(out.selected_id),
                format!("selected #{} but the maintainers chose #{expected}", out.selected_id),
            ));
        }
        if out.think.trim().is_empty() || out.justification.trim().is_empty() {
            return Err((TeacherRejection::Format, "think trace and justification must be non-empty".into()));
        }
        Ok(out)
    });
    let id = instance.id().to_string();
    match (outcome.value, outcome.error) {
        (Some(out), _) => Ok(AnnotatedInstance {
            reference: ReferenceAnnotation {
                instance_id: id,
                think: out.think,
                justification: out.justification,
                golden: out.golden,
                ground_truth_id: expected,
            },
            instance: instance.clone(),
            teacher_model: teacher.model().to_string(),
        }),
        (None, Some(TeacherRejection::Disagree(selected))) => {
            Err(CurateError::TeacherDisagreement { id, selected, expected })
        }
        (None, Some(TeacherRejection::Backend)) => Err(CurateError::TeacherBackend {
            id,
            detail: outcome.detail.unwrap_or_default(),
        }),
        (None, _) => Err(CurateError::TeacherFormatFailure {
            id,
            attempts: outcome.attempts,
            detail: outcome.detail.unwrap_or_default(),
        }),
    }
}

/// [`build_sft_target`] over a dataset, order-stable.
pub fn build_sft_targets(
    instances: &[ManagerInstance],
    teacher: &dyn ChatBackend,
    config: &ManagerRunConfig,
    parallelism: usize,
) -> Vec<Result<AnnotatedInstance, CurateError>> {
    parallel_map(instances, parallelism, |_, inst| build_sft_target(inst, teacher, config))
}

// ---- length statistics ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub n: usize,
    pub mean: f64,
    /// Mean of the two middle values for even `n`.
    pub median: f64,
    /// Nearest rank: the value at 1-based index `⌈0.9·n⌉`.
    pub p90: u64,
    pub min: u64,
    pub max: u64,
}

pub fn whitespace_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

pub fn length_stats(lengths: &[u64]) -> Result<LengthStats, CurateError> {
    if lengths.is_empty() {
        return Err(CurateError::EmptyDataset);
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let sum: u128 = sorted.iter().map(|&v| u128::from(v)).sum();
    let median = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    };
    let rank = (9 * n).div_ceil(10);
    Ok(LengthStats {
        n,
        mean: sum as f64 / n as f64,
        median,
        p90: sorted[rank - 1],
        min: sorted[0],
        max: sorted[n - 1],
    })
}

/// Length statistics of the rendered manager prompts.
pub fn token_length_stats(
    instances: &[ManagerInstance],
    count_fn: &dyn Fn(&str) -> u64,
) -> Result<LengthStats, CurateError> {
    let lengths: Vec<u64> = instances
        .iter()
        .map(|inst| count_fn(&render_manager_prompt(inst).text))
        .collect();
    length_stats(&lengths)
}

// ---- rationale taxonomy ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Theme {
    RiskAndSafety,
    FixDepth,
    Maintainability,
    Others,
}

impl Theme {
    pub const ALL: [Theme; 4] = [Theme::RiskAndSafety, Theme::FixDepth, Theme::Maintainability, Theme::Others];

    pub fn label(self) -> &'static str {
        match self {
            Theme::RiskAndSafety => "Risk and Safety",
            Theme::FixDepth => "Fix Depth",
            Theme::Maintainability => "Maintainability",
            Theme::Others => "Others",
        }
    }

    pub fn criteria(self) -> impl Iterator<Item = Criterion> {
        Criterion::ALL.into_iter().filter(move |c| c.theme() == self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Criterion {
    MinimalVerifiableChange,
    ControlledScope,
    EdgeCaseRobustness,
    TimeCriticalMitigation,
    RootCauseElimination,
    SystematicRemediation,
    RepoConstraintConformance,
    Extensibility,
    ProductDesignMatch,
    DeliverySpeedTieBreak,
}

impl Criterion {
    pub const ALL: [Criterion; 10] = [
        Criterion::MinimalVerifiableChange,
        Criterion::ControlledScope,
        Criterion::EdgeCaseRobustness,
        Criterion::TimeCriticalMitigation,
        Criterion::RootCauseElimination,
        Criterion::SystematicRemediation,
        Criterion::RepoConstraintConformance,
        Criterion::Extensibility,
        Criterion::ProductDesignMatch,
        Criterion::DeliverySpeedTieBreak,
    ];

    pub fn theme(self) -> Theme {
        use Criterion::*;
        match self {
            MinimalVerifiableChange | ControlledScope | EdgeCaseRobustness | TimeCriticalMitigation => {
                Theme::RiskAndSafety
            }
            RootCauseElimination | SystematicRemediation => Theme::FixDepth,
            RepoConstraintConformance | Extensibility => Theme::Maintainability,
            ProductDesignMatch | DeliverySpeedTieBreak => Theme::Others,
        }
    }

    pub fn description(self) -> &'static str {
        use Criterion::*;
        match self {
            MinimalVerifiableChange => "Minimal, verifiable change with low regression risk",
            ControlledScope => "Controlled fix scope and high executability",
            EdgeCaseRobustness => "Better robustness in edge case",
            TimeCriticalMitigation => "Time-critical mitigation",
            RootCauseElimination => "Root-cause elimination (vs. symptom-level patching)",
            SystematicRemediation => "Systematic remediation (vs. fixing only the observed failure case)",
            RepoConstraintConformance => "Conforms to repository engineering constraints",
            Extensibility => "More extensible for future requirements or variants",
            ProductDesignMatch => "Better matches product design and expectations",
            DeliverySpeedTieBreak => "Tie-breaking by delivery speed",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.description())
    }
}

/// A tagged reason for a selection. The theme is always the criterion's
/// own theme; deserialization rejects mismatches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawRationale")]
pub struct SelectionRationale {
    theme: Theme,
    criterion: Criterion,
}

#[derive(Deserialize)]
struct RawRationale {
    theme: Option<Theme>,
    criterion: Criterion,
}

impl TryFrom<RawRationale> for SelectionRationale {
    type Error = CurateError;

    fn try_from(raw: RawRationale) -> Result<Self, CurateError> {
        match raw.theme {
            Some(theme) => SelectionRationale::with_theme(theme, raw.criterion),
            None => Ok(SelectionRationale::new(raw.criterion)),
        }
    }
}

impl SelectionRationale {
    pub fn new(criterion: Criterion) -> Self {
        SelectionRationale {
            theme: criterion.theme(),
            criterion,
        }
    }

    pub fn with_theme(theme: Theme, criterion: Criterion) -> Result<Self, CurateError> {
        if criterion.theme() != theme {
            return Err(CurateError::ThemeMismatch {
                criterion,
                expected: criterion.theme(),
                given: theme,
            });
        }
        Ok(SelectionRationale { theme, criterion })
    }

    pub fn theme(&self) -> Theme {
        self.theme
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationaleTally {
    pub by_criterion: BTreeMap<Criterion, u64>,
    pub by_theme: BTreeMap<Theme, u64>,
    pub total: u64,
}

impl RationaleTally {
    pub fn criterion(&self, c: Criterion) -> u64 {
        self.by_criterion.get(&c).copied().unwrap_or(0)
    }

    pub fn subtotal(&self, t: Theme) -> u64 {
        self.by_theme.get(&t).copied().unwrap_or(0)
    }

    pub fn to_text(&self) -> String {
        let width = Criterion::ALL.iter().map(|c| c.description().len()).max().unwrap_or(0);
        let mut out = String::new();
        for theme in Theme::ALL {
            out.push_str(theme.label());
            out.push('\n');
            for c in theme.criteria() {
                out.push_str(&format!("  {:<width$}  {:>5}\n", c.description(), self.criterion(c)));
            }
            out.push_str(&format!("  {:>width$}  {:>5}\n", "Subtotal", self.subtotal(theme)));
        }
        out.push_str(&format!("  {:>width$}  {:>5}\n", "Total", self.total));
        out
    }
}

/// Counts per criterion, per theme, and overall. Every criterion and theme
/// appears in the maps, zero or not.
pub fn tally_rationales(tags: &[SelectionRationale]) -> RationaleTally {
    let mut by_criterion: BTreeMap<Criterion, u64> = Criterion::ALL.iter().map(|&c| (c, 0)).collect();
    for tag in tags {
        *by_criterion.entry(tag.criterion).or_default() += 1;
    }
    let by_theme: BTreeMap<Theme, u64> = Theme::ALL
        .iter()
        .map(|&t| (t, t.criteria().map(|c| by_criterion[&c]).sum()))
        .collect();
    RationaleTally {
        total: by_theme.values().sum(),
        by_criterion,
        by_theme,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{sample_golden, synthetic_instance};
    use crate::llm::MockBackend;
    use crate::model::Money;
    use crate::prompt::render_canonical_response;

    #[test]
    fn sample_size_examples() {
        assert_eq!(required_sample_size(2852, 0.05, Confidence::P95), Ok(339));
        assert_eq!(required_sample_size(1, 0.05, Confidence::P95), Ok(1));
        assert_eq!(required_sample_size(1_000_000_000, 0.05, Confidence::P95), Ok(385));
        assert_eq!(required_sample_size(10, 0.0, Confidence::P95), Err(CurateError::InvalidMargin(0.0)));
        assert_eq!(required_sample_size(10, 1.0, Confidence::P95), Err(CurateError::InvalidMargin(1.0)));
        assert!(required_sample_size(10, f64::NAN, Confidence::P95).is_err());
        assert_eq!(required_sample_size(0, 0.05, Confidence::P95), Err(CurateError::InvalidPopulation));
    }

    #[test]
    fn confidence_levels() {
        assert_eq!(Confidence::try_from(0.95), Ok(Confidence::P95));
        assert_eq!(Confidence::try_from(0.9), Ok(Confidence::P90));
        assert!(Confidence::try_from(0.8).is_err());
    }

    #[test]
    fn leakage_examples() {
        let train = vec![
            synthetic_instance("a", 2, 1, Money(1)),
            synthetic_instance("b", 2, 1, Money(1)),
        ];
        let keys = BenchmarkKeys {
            ids: ["a".to_string()].into(),
            issues: HashSet::new(),
        };
        let (kept, report) = filter_leakage(train.clone(), &keys);
        assert_eq!(kept, vec![train[1].clone()]);
        assert_eq!(report.removed_ids(), ["a"]);
        let (kept, report) = filter_leakage(train.clone(), &BenchmarkKeys::default());
        assert_eq!(kept, train);
        assert!(report.removed.is_empty());
    }

    #[test]
    fn stats_examples() {
        let s = length_stats(&[4]).unwrap();
        assert_eq!((s.mean, s.median, s.p90), (4.0, 4.0, 4));
        let s = length_stats(&[10, 2, 4]).unwrap();
        assert!((s.mean - 16.0 / 3.0).abs() < 1e-12);
        assert_eq!((s.median, s.p90), (4.0, 10));
        assert_eq!(length_stats(&[1, 2, 3, 4]).unwrap().median, 2.5);
        assert_eq!(length_stats(&[]), Err(CurateError::EmptyDataset));
        // ⌈0.9·10⌉ = 9
        assert_eq!(length_stats(&(1..=10).collect::<Vec<_>>()).unwrap().p90, 9);
        assert_eq!(length_stats(&(1..=11).collect::<Vec<_>>()).unwrap().p90, 10);
    }

    #[test]
    fn token_stats_use_rendered_prompt() {
        let inst = synthetic_instance("a", 2, 1, Money(1));
        let s = token_length_stats(std::slice::from_ref(&inst), &whitespace_count).unwrap();
        assert_eq!(s.max, whitespace_count(&render_manager_prompt(&inst).text));
        assert!(token_length_stats(&[], &whitespace_count).is_err());
    }

    #[test]
    fn tally_examples() {
        assert_eq!(tally_rationales(&[]).total, 0);
        let mut tags = Vec::new();
        for (c, n) in [
            (Criterion::MinimalVerifiableChange, 86),
            (Criterion::ControlledScope, 32),
            (Criterion::EdgeCaseRobustness, 20),
            (Criterion::TimeCriticalMitigation, 7),
        ] {
            tags.extend(std::iter::repeat_n(SelectionRationale::new(c), n));
        }
        let t = tally_rationales(&tags);
        assert_eq!(t.subtotal(Theme::RiskAndSafety), 145);
        assert_eq!(t.subtotal(Theme::FixDepth), 0);
        assert_eq!(t.total, 145);
    }

    #[test]
    fn rationale_theme_is_checked() {
        assert!(SelectionRationale::with_theme(Theme::FixDepth, Criterion::Extensibility).is_err());
        let ok: SelectionRationale =
            serde_json::from_str(r#"{"theme":"FixDepth","criterion":"SystematicRemediation"}"#).unwrap();
        assert_eq!(ok.theme(), Theme::FixDepth);
        assert!(serde_json::from_str::<SelectionRationale>(r#"{"theme":"Others","criterion":"RootCauseElimination"}"#).is_err());
        let inferred: SelectionRationale = serde_json::from_str(r#"{"criterion":"Extensibility"}"#).unwrap();
        assert_eq!(inferred.theme(), Theme::Maintainability);
    }

    fn teacher(responses: Vec<String>) -> MockBackend {
        MockBackend::sequential("teacher", responses)
    }

    #[test]
    fn teacher_consistent_output() {
        let inst = synthetic_instance("a", 3, 2, Money(1));
        let t = teacher(vec![render_canonical_response("why", 2, "because", &sample_golden("x"))]);
        let ann = build_sft_target(&inst, &t, &ManagerRunConfig::default()).unwrap();
        assert_eq!(ann.reference.ground_truth_id, 2);
        assert_eq!(ann.reference.think, "why");
        assert_eq!(ann.teacher_model, "teacher");
        let line = serde_json::to_string(&ann).unwrap();
        let back: AnnotatedInstance = serde_json::from_str(&line).unwrap();
        assert_eq!(back, ann);
        assert!(!back.instance.extra.contains_key("reference"));
    }

    #[test]
    fn teacher_disagreement() {
        let inst = synthetic_instance("a", 3, 2, Money(1));
        let wrong = render_canonical_response("why", 1, "because", &sample_golden("x"));
        let t = teacher(vec![wrong.clone(), wrong.clone(), wrong]);
        let err = build_sft_target(&inst, &t, &ManagerRunConfig::default()).unwrap_err();
        assert_eq!(err, CurateError::TeacherDisagreement { id: "a".into(), selected: 1, expected: 2 });
        assert_eq!(t.calls(), 3);
    }

    #[test]
    fn teacher_malformed_golden() {
        let inst = synthetic_instance("a", 3, 2, Money(1));
        let bad = "<think>t</think>\nBest Proposal: #2\nok\n## Problem\nonly this\n".to_string();
        let t = teacher(vec![bad.clone(), bad.clone(), bad]);
        assert!(matches!(
            build_sft_target(&inst, &t, &ManagerRunConfig::default()),
            Err(CurateError::TeacherFormatFailure { attempts: 3, .. })
        ));
    }

    #[test]
    fn teacher_recovers_on_retry() {
        let inst = synthetic_instance("a", 3, 2, Money(1));
        let t = teacher(vec![
            render_canonical_response("why", 3, "because", &sample_golden("x")),
            render_canonical_response("why", 2, "because", &sample_golden("x")),
        ]);
        assert!(build_sft_target(&inst, &t, &ManagerRunConfig::default()).is_ok());
    }
}
