//! Composite reward for manager outputs.
//!
//! `r = w_sel·r_sel + w_think·r_think + w_justi·r_justi + w_gold·r_gold`
//! where `r_sel` is the exact indicator `selected_id == ground_truth_id` and
//! the other three are text similarities against a reference annotation.
//! The default weights are (0.4, 0.2, 0.2, 0.2). An output that does not
//! parse earns zero on every component.

pub mod service;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{GoldenProposal, ManagerOutput};
use crate::prompt::parse_manager_output;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w_sel: f64,
    pub w_think: f64,
    pub w_justi: f64,
    pub w_gold: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            w_sel: 0.4,
            w_think: 0.2,
            w_justi: 0.2,
            w_gold: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("weights must be finite and non-negative, got {0:?}")]
    NegativeWeight(RewardWeights),
    #[error("weights must sum to 1 (±1e-9), got {0}")]
    WeightSum(f64),
    #[error("cannot normalize weights that sum to zero")]
    ZeroWeights,
    #[error("n_candidates must be at least 2, got {0}")]
    TooFewCandidates(usize),
}

pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl RewardWeights {
    pub fn new(w_sel: f64, w_think: f64, w_justi: f64, w_gold: f64) -> Result<Self, RewardError> {
        let w = RewardWeights { w_sel, w_think, w_justi, w_gold };
        w.validate()?;
        Ok(w)
    }

    /// Scales arbitrary non-negative weights so they sum to one.
    pub fn normalized(w_sel: f64, w_think: f64, w_justi: f64, w_gold: f64) -> Result<Self, RewardError> {
        let raw = RewardWeights { w_sel, w_think, w_justi, w_gold };
        if raw.as_array().iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(RewardError::NegativeWeight(raw));
        }
        let total = w_sel + w_think + w_justi + w_gold;
        if total <= 0.0 {
            return Err(RewardError::ZeroWeights);
        }
        Self::new(w_sel / total, w_think / total, w_justi / total, w_gold / total)
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if self.as_array().iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(RewardError::NegativeWeight(*self));
        }
        let sum: f64 = self.as_array().iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(RewardError::WeightSum(sum));
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 4] {
        [self.w_sel, self.w_think, self.w_justi, self.w_gold]
    }
}

/// Teacher-written targets for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceAnnotation {
    #[serde(default)]
    pub instance_id: String,
    pub think: String,
    pub justification: String,
    pub golden: GoldenProposal,
    pub ground_truth_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r: f64,
    pub r_sel: f64,
    pub r_think: f64,
    pub r_justi: f64,
    pub r_gold: f64,
    pub format_ok: u8,
}

impl RewardBreakdown {
    pub const ZERO: RewardBreakdown = RewardBreakdown {
        r: 0.0,
        r_sel: 0.0,
        r_think: 0.0,
        r_justi: 0.0,
        r_gold: 0.0,
        format_ok: 0,
    };

    /// Combines components under `weights`.
    pub fn combine(weights: &RewardWeights, r_sel: f64, r_think: f64, r_justi: f64, r_gold: f64) -> Self {
        RewardBreakdown {
            r: weights.w_sel * r_sel + weights.w_think * r_think + weights.w_justi * r_justi + weights.w_gold * r_gold,
            r_sel,
            r_think,
            r_justi,
            r_gold,
            format_ok: 1,
        }
    }
}

/// 1 when the selection equals ground truth, else 0.
pub fn selection_reward(selected_id: u32, ground_truth_id: u32) -> u8 {
    u8::from(selected_id == ground_truth_id)
}

/// Pluggable text scorer; implementations must return values in `[0, 1]`.
pub trait SimilarityScorer: Send + Sync {
    fn score(&self, candidate: &str, reference: &str) -> f64;
}

/// Token-level longest-common-subsequence F1 (ROUGE-L style).
#[derive(Debug, Clone, Copy, Default)]
pub struct LcsF1;

impl SimilarityScorer for LcsF1 {
    fn score(&self, candidate: &str, reference: &str) -> f64 {
        text_similarity(candidate, reference)
    }
}

/// Lowercases, removes punctuation, splits on whitespace.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|word| {
            word.chars()
                .filter(|c| !is_punctuation(*c))
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c, '‘' | '’' | '“' | '”' | '…' | '\u{2013}' | '\u{2014}' | '«' | '»' | '·' | '¿' | '¡')
}

/// Length of the longest common subsequence, two-row dynamic programme.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut prev = vec![0usize; short.len() + 1];
    let mut cur = vec![0usize; short.len() + 1];
    for x in long {
        for (j, y) in short.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// LCS-F1 over normalized tokens. Two empty texts score 1; exactly one
/// empty text scores 0.
pub fn text_similarity(candidate: &str, reference: &str) -> f64 {
    let c = normalize_tokens(candidate);
    let r = normalize_tokens(reference);
    match (c.is_empty(), r.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let l = lcs_len(&c, &r);
    if l == 0 {
        return 0.0;
    }
    // harmonic mean of L/|c| and L/|r|
    (2 * l) as f64 / (c.len() + r.len()) as f64
}

/// Scores a parsed output against its reference.
pub fn composite_reward(
    output: &ManagerOutput,
    reference: &ReferenceAnnotation,
    weights: &RewardWeights,
) -> RewardBreakdown {
    composite_reward_with(output, reference, weights, &LcsF1)
}

pub fn composite_reward_with(
    output: &ManagerOutput,
    reference: &ReferenceAnnotation,
    weights: &RewardWeights,
    scorer: &dyn SimilarityScorer,
) -> RewardBreakdown {
    let r_sel = f64::from(selection_reward(output.selected_id, reference.ground_truth_id));
    let r_think = scorer.score(&output.think, &reference.think);
    let r_justi = scorer.score(&output.justification, &reference.justification);
    let r_gold = golden_similarity(&output.golden, &reference.golden, scorer);
    RewardBreakdown::combine(weights, r_sel, r_think, r_justi, r_gold)
}

/// Mean of the per-section similarities.
pub fn golden_similarity(candidate: &GoldenProposal, reference: &GoldenProposal, scorer: &dyn SimilarityScorer) -> f64 {
    let sections = [
        scorer.score(&candidate.problem, &reference.problem),
        scorer.score(&candidate.root_cause, &reference.root_cause),
        scorer.score(&candidate.solution, &reference.solution),
    ];
    sections.iter().sum::<f64>() / 3.0
}

/// Parses `raw_text` first; unparseable text earns [`RewardBreakdown::ZERO`].
pub fn composite_reward_raw(
    raw_text: &str,
    n_candidates: usize,
    reference: &ReferenceAnnotation,
    weights: &RewardWeights,
) -> Result<RewardBreakdown, RewardError> {
    if n_candidates < 2 {
        return Err(RewardError::TooFewCandidates(n_candidates));
    }
    Ok(match parse_manager_output(raw_text, n_candidates) {
        Ok(output) => composite_reward(&output, reference, weights),
        Err(_) => RewardBreakdown::ZERO,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::render_canonical_response;

    fn reference() -> ReferenceAnnotation {
        ReferenceAnnotation {
            instance_id: "i".into(),
            think: "compare the two".into(),
            justification: "smaller change".into(),
            golden: GoldenProposal::new("crash on save", "null handle", "guard the handle"),
            ground_truth_id: 2,
        }
    }

    fn output(selected: u32, think: &str, just: &str, golden: GoldenProposal) -> ManagerOutput {
        ManagerOutput {
            think: think.into(),
            selected_id: selected,
            justification: just.into(),
            golden,
            raw_text: String::new(),
        }
    }

    #[test]
    fn selection_indicator() {
        assert_eq!(selection_reward(2, 2), 1);
        assert_eq!(selection_reward(1, 2), 0);
        assert_eq!(selection_reward(7, 7), 1);
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(text_similarity("fix the crash", "fix the crash"), 1.0);
        assert_eq!(text_similarity("alpha beta", "gamma delta"), 0.0);
        assert!((text_similarity("fix the crash", "fix crash now") - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(text_similarity("", ""), 1.0);
        assert_eq!(text_similarity("...", ""), 1.0);
        assert_eq!(text_similarity("a", ""), 0.0);
        assert_eq!(text_similarity("Fix, the CRASH!", "fix the crash"), 1.0);
    }

    #[test]
    fn lcs_small_cases() {
        assert_eq!(lcs_len(&[1, 2, 3, 4], &[2, 4]), 2);
        assert_eq!(lcs_len(&[1, 2, 3], &[3, 2, 1]), 1);
        assert_eq!(lcs_len::<u8>(&[], &[1]), 0);
        assert_eq!(lcs_len(&["a", "b", "c", "b", "d", "a", "b"], &["b", "d", "c", "a", "b", "a"]), 4);
    }

    #[test]
    fn tabulated_rewards() {
        let w = RewardWeights::default();
        let rf = reference();
        let perfect = output(2, &rf.think, &rf.justification, rf.golden.clone());
        assert!((composite_reward(&perfect, &rf, &w).r - 1.0).abs() < 1e-12);

        let nothing = output(1, "zzz", "yyy", GoldenProposal::new("q", "w", "e"));
        assert_eq!(composite_reward(&nothing, &rf, &w).r, 0.0);

        let b = RewardBreakdown::combine(&w, 1.0, 0.5, 0.5, 0.5);
        assert!((b.r - 0.7).abs() < 1e-12);
    }

    #[test]
    fn golden_is_section_mean() {
        let rf = reference();
        let half = GoldenProposal::new(rf.golden.problem.clone(), "totally unrelated words", "");
        let g = golden_similarity(&half, &rf.golden, &LcsF1);
        assert!((g - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unparseable_raw_scores_zero() {
        let w = RewardWeights::default();
        let b = composite_reward_raw("no selection here", 3, &reference(), &w).unwrap();
        assert_eq!(b, RewardBreakdown::ZERO);
        let rf = reference();
        let text = render_canonical_response(&rf.think, 2, &rf.justification, &rf.golden);
        let b = composite_reward_raw(&text, 3, &rf, &w).unwrap();
        assert_eq!(b.format_ok, 1);
        assert!((b.r - 1.0).abs() < 1e-12);
        assert!(composite_reward_raw(&text, 1, &rf, &w).is_err());
    }

    #[test]
    fn weight_validation() {
        assert!(RewardWeights::new(0.4, 0.2, 0.2, 0.2).is_ok());
        assert!(matches!(RewardWeights::new(0.5, 0.2, 0.2, 0.2), Err(RewardError::WeightSum(_))));
        assert!(matches!(RewardWeights::new(1.2, -0.2, 0.0, 0.0), Err(RewardError::NegativeWeight(_))));
        let n = RewardWeights::normalized(2.0, 1.0, 1.0, 1.0).unwrap();
        assert!((n.w_sel - 0.4).abs() < 1e-15);
        assert!(matches!(RewardWeights::normalized(0.0, 0.0, 0.0, 0.0), Err(RewardError::ZeroWeights)));
    }

    #[test]
    fn wrong_id_bound() {
        let w = RewardWeights::default();
        let rf = reference();
        let best_wrong = output(1, &rf.think, &rf.justification, rf.golden.clone());
        let r = composite_reward(&best_wrong, &rf, &w).r;
        assert!(r <= 1.0 - w.w_sel + 1e-12);
    }
}
