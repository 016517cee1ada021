//! Scoring of Manager and IC runs, plus the bin and overlap analyses.
//!
//! Counts and dollar sums are exact integers. Percentages are kept as
//! `f64` for programmatic use, but every report renders them from the
//! integer ratio with half-up rounding (2 dp for Manager, 1 dp for IC), so
//! printed figures never depend on float formatting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::manager::DecisionRecord;
use crate::model::{IssueRecord, ManagerInstance, Money};

/// Decimal places used by Manager reports.
pub const MANAGER_DP: u32 = 2;
/// Decimal places used by IC reports.
pub const IC_DP: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BenchError {
    #[error("run references unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("instance `{0}` appears more than once in the run")]
    DuplicateDecision(String),
    #[error("instance `{0}` has no entry in the run (use partial mode to count it as a miss)")]
    MissingDecision(String),
    #[error("instance `{0}` appears more than once in the dataset")]
    DuplicateInstance(String),
    #[error("nothing to score")]
    EmptyRun,
    #[error("runs cover different instances ({only_a} only in the first, {only_b} only in the second)")]
    MismatchedInstanceSets { only_a: usize, only_b: usize },
}

/// Whether instances absent from the run are an error or a silent miss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    #[default]
    Strict,
    AllowPartial,
}

/// `100·num/den` rounded half-up to `dp` places, computed on integers.
///
/// Returns `"n/a"` when `den` is zero.
pub fn format_pct(num: u64, den: u64, dp: u32) -> String {
    if den == 0 {
        return "n/a".to_string();
    }
    let scale = 10u128.pow(dp);
    let scaled = u128::from(num) * 100 * scale;
    let den = u128::from(den);
    let mut q = scaled / den;
    if 2 * (scaled % den) >= den {
        q += 1;
    }
    if dp == 0 {
        q.to_string()
    } else {
        format!("{}.{:0width$}", q / scale, q % scale, width = dp as usize)
    }
}

fn pct(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Rounded figure as a JSON number (the value of the formatted string).
fn pct_json(num: u64, den: u64, dp: u32) -> Value {
    format_pct(num, den, dp)
        .parse::<f64>()
        .map(Value::from)
        .unwrap_or(Value::Null)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManagerScore {
    pub match_pct: f64,
    pub n_match: u64,
    pub n_total: u64,
    pub earned_pct: f64,
    pub dollars_earned: Money,
    pub dollars_total: Money,
    pub n_errors: u64,
    /// Instances absent from the log; always 0 in strict mode.
    pub n_missing: u64,
}

impl ManagerScore {
    pub fn match_pct_str(&self) -> String {
        format_pct(self.n_match, self.n_total, MANAGER_DP)
    }

    pub fn earned_pct_str(&self) -> String {
        format_pct(self.dollars_earned.0, self.dollars_total.0, MANAGER_DP)
    }

    pub fn to_report_json(&self) -> Value {
        json!({
            "match_pct": pct_json(self.n_match, self.n_total, MANAGER_DP),
            "earned_pct": pct_json(self.dollars_earned.0, self.dollars_total.0, MANAGER_DP),
            "n_match": self.n_match,
            "n_total": self.n_total,
            "dollars_earned": self.dollars_earned,
            "dollars_total": self.dollars_total,
            "n_errors": self.n_errors,
            "n_missing": self.n_missing,
        })
    }

    pub fn to_text(&self) -> String {
        aligned(&[
            ("Match%", self.match_pct_str()),
            ("Earned%", self.earned_pct_str()),
            ("Matched", format!("{} / {}", self.n_match, self.n_total)),
            ("Earned", format!("{} / {}", self.dollars_earned, self.dollars_total)),
            ("Errors", self.n_errors.to_string()),
            ("Missing", self.n_missing.to_string()),
        ])
    }
}

/// An externally computed pass/fail outcome for one IC instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub instance_id: String,
    pub passed: bool,
    #[serde(rename = "price_usd")]
    pub price: Money,
}

impl Verdict {
    pub fn new(instance_id: impl Into<String>, passed: bool, price: Money) -> Self {
        Verdict {
            instance_id: instance_id.into(),
            passed,
            price,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcScore {
    pub pass_pct: f64,
    pub n_pass: u64,
    pub n_total: u64,
    pub earned_pct: f64,
    pub dollars_earned: Money,
    pub dollars_total: Money,
    pub n_missing: u64,
}

impl IcScore {
    pub fn pass_pct_str(&self) -> String {
        format_pct(self.n_pass, self.n_total, IC_DP)
    }

    pub fn earned_pct_str(&self) -> String {
        format_pct(self.dollars_earned.0, self.dollars_total.0, IC_DP)
    }

    pub fn to_report_json(&self) -> Value {
        json!({
            "pass_pct": pct_json(self.n_pass, self.n_total, IC_DP),
            "earned_pct": pct_json(self.dollars_earned.0, self.dollars_total.0, IC_DP),
            "n_pass": self.n_pass,
            "n_total": self.n_total,
            "dollars_earned": self.dollars_earned,
            "dollars_total": self.dollars_total,
            "n_missing": self.n_missing,
        })
    }

    pub fn to_text(&self) -> String {
        aligned(&[
            ("Pass%", self.pass_pct_str()),
            ("Earned%", self.earned_pct_str()),
            ("Passed", format!("{} / {}", self.n_pass, self.n_total)),
            ("Earned", format!("{} / {}", self.dollars_earned, self.dollars_total)),
            ("Missing", self.n_missing.to_string()),
        ])
    }
}

fn aligned(rows: &[(&str, String)]) -> String {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<width$}  {v}");
    }
    out
}

/// Pairs every instance (in id order) with its run entry, enforcing one
/// entry per instance and no strangers.
fn align<'a, I, R>(
    instances: &'a [I],
    inst_id: impl Fn(&I) -> &str,
    run: &'a [R],
    run_id: impl Fn(&R) -> &str,
    coverage: Coverage,
) -> Result<Vec<(&'a I, Option<&'a R>)>, BenchError> {
    let mut by_id: BTreeMap<&str, &I> = BTreeMap::new();
    for inst in instances {
        if by_id.insert(inst_id(inst), inst).is_some() {
            return Err(BenchError::DuplicateInstance(inst_id(inst).to_string()));
        }
    }
    if by_id.is_empty() {
        return Err(BenchError::EmptyRun);
    }
    let mut entries: HashMap<&str, &R> = HashMap::new();
    for r in run {
        let id = run_id(r);
        if !by_id.contains_key(id) {
            return Err(BenchError::UnknownInstance(id.to_string()));
        }
        if entries.insert(id, r).is_some() {
            return Err(BenchError::DuplicateDecision(id.to_string()));
        }
    }
    by_id
        .into_iter()
        .map(|(id, inst)| match entries.get(id) {
            Some(r) => Ok((inst, Some(*r))),
            None if coverage == Coverage::AllowPartial => Ok((inst, None)),
            None => Err(BenchError::MissingDecision(id.to_string())),
        })
        .collect()
}

fn is_match(inst: &ManagerInstance, rec: Option<&DecisionRecord>) -> bool {
    rec.and_then(DecisionRecord::effective_selection) == Some(inst.ground_truth_id)
}

/// Match% and Earned% of a decision log against labeled instances.
/// Error records count as misses and into `n_errors`.
pub fn score_manager_run(
    decisions: &[DecisionRecord],
    instances: &[ManagerInstance],
    coverage: Coverage,
) -> Result<ManagerScore, BenchError> {
    let pairs = align(instances, |i| i.id(), decisions, |d| d.instance_id.as_str(), coverage)?;
    let mut score = ManagerScore {
        match_pct: 0.0,
        n_match: 0,
        n_total: pairs.len() as u64,
        earned_pct: 0.0,
        dollars_earned: Money::ZERO,
        dollars_total: Money::ZERO,
        n_errors: 0,
        n_missing: 0,
    };
    for (inst, rec) in pairs {
        score.dollars_total += inst.price();
        match rec {
            None => score.n_missing += 1,
            Some(r) if r.effective_selection().is_none() => score.n_errors += 1,
            Some(_) => {}
        }
        if is_match(inst, rec) {
            score.n_match += 1;
            score.dollars_earned += inst.price();
        }
    }
    score.match_pct = pct(score.n_match, score.n_total);
    score.earned_pct = pct(score.dollars_earned.0, score.dollars_total.0);
    Ok(score)
}

/// Pass% and Earned% of IC verdicts. Dollar amounts come from `instances`;
/// the price carried by a verdict is informational.
pub fn score_ic_run(verdicts: &[Verdict], instances: &[IssueRecord], coverage: Coverage) -> Result<IcScore, BenchError> {
    let pairs = align(instances, |i| i.id.as_str(), verdicts, |v| v.instance_id.as_str(), coverage)?;
    let mut score = IcScore {
        pass_pct: 0.0,
        n_pass: 0,
        n_total: pairs.len() as u64,
        earned_pct: 0.0,
        dollars_earned: Money::ZERO,
        dollars_total: Money::ZERO,
        n_missing: 0,
    };
    for (inst, verdict) in pairs {
        score.dollars_total += inst.price;
        match verdict {
            None => score.n_missing += 1,
            Some(v) if v.passed => {
                score.n_pass += 1;
                score.dollars_earned += inst.price;
            }
            Some(_) => {}
        }
    }
    score.pass_pct = pct(score.n_pass, score.n_total);
    score.earned_pct = pct(score.dollars_earned.0, score.dollars_total.0);
    Ok(score)
}

/// Scores verdicts on their own, trusting the prices they carry.
pub fn score_verdicts(verdicts: &[Verdict]) -> Result<IcScore, BenchError> {
    let issues: Vec<IssueRecord> = verdicts
        .iter()
        .map(|v| IssueRecord {
            id: v.instance_id.clone(),
            repo: String::new(),
            issue_number: 0,
            title: String::new(),
            body: String::new(),
            price: v.price,
        })
        .collect();
    score_ic_run(verdicts, &issues, Coverage::Strict)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub bin_label: String,
    pub n_correct: u64,
    pub n_total: u64,
    /// Absent for empty bins.
    pub pct: Option<f64>,
}

impl BinRow {
    pub fn pct_str(&self) -> String {
        if self.n_total == 0 {
            "-".to_string()
        } else {
            format_pct(self.n_correct, self.n_total, MANAGER_DP)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub bins: Vec<BinRow>,
}

impl BinReport {
    pub fn row(&self, label: &str) -> Option<&BinRow> {
        self.bins.iter().find(|b| b.bin_label == label)
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.n_total).sum()
    }

    pub fn to_report_json(&self) -> Value {
        Value::Array(
            self.bins
                .iter()
                .map(|b| {
                    json!({
                        "bin_label": b.bin_label,
                        "n_correct": b.n_correct,
                        "n_total": b.n_total,
                        "pct": if b.n_total == 0 { Value::Null } else { pct_json(b.n_correct, b.n_total, MANAGER_DP) },
                    })
                })
                .collect(),
        )
    }

    pub fn to_text(&self) -> String {
        let width = self.bins.iter().map(|b| b.bin_label.len()).max().unwrap_or(3).max(3);
        let mut out = format!("{:<width$}  {:>7}  {:>5}  {:>6}\n", "bin", "correct", "total", "pct");
        for b in &self.bins {
            let _ = writeln!(
                out,
                "{:<width$}  {:>7}  {:>5}  {:>6}",
                b.bin_label,
                b.n_correct,
                b.n_total,
                b.pct_str()
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["bin_label", "n_correct", "n_total", "pct"]).expect("in-memory write");
        for b in &self.bins {
            let pct = if b.n_total == 0 { String::new() } else { b.pct_str() };
            w.write_record([b.bin_label.clone(), b.n_correct.to_string(), b.n_total.to_string(), pct])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

pub const PROPOSAL_COUNT_BINS: [&str; 5] = ["2", "3", "4", "5", "6+"];
pub const REWARD_BINS: [&str; 4] = ["$0-$500", "$500-$1K", "$1K-$2K", "$2K+"];

pub fn proposal_count_bin(n: usize) -> usize {
    n.clamp(2, 6) - 2
}

/// Half-open dollar intervals: [0,500), [500,1000), [1000,2000), [2000,∞).
pub fn reward_bin(price: Money) -> usize {
    match price.0 {
        0..500 => 0,
        500..1000 => 1,
        1000..2000 => 2,
        _ => 3,
    }
}

fn bin_by(
    decisions: &[DecisionRecord],
    instances: &[ManagerInstance],
    coverage: Coverage,
    labels: &[&str],
    key: impl Fn(&ManagerInstance) -> usize,
) -> Result<BinReport, BenchError> {
    let pairs = align(instances, |i| i.id(), decisions, |d| d.instance_id.as_str(), coverage)?;
    let mut counts = vec![(0u64, 0u64); labels.len()];
    for (inst, rec) in pairs {
        let slot = &mut counts[key(inst)];
        slot.1 += 1;
        if is_match(inst, rec) {
            slot.0 += 1;
        }
    }
    Ok(BinReport {
        bins: labels
            .iter()
            .zip(counts)
            .map(|(label, (n_correct, n_total))| BinRow {
                bin_label: label.to_string(),
                n_correct,
                n_total,
                pct: (n_total > 0).then(|| pct(n_correct, n_total)),
            })
            .collect(),
    })
}

/// Manager accuracy grouped by candidate count N ∈ {2, 3, 4, 5, 6+}.
pub fn bin_by_proposal_count(
    decisions: &[DecisionRecord],
    instances: &[ManagerInstance],
    coverage: Coverage,
) -> Result<BinReport, BenchError> {
    bin_by(decisions, instances, coverage, &PROPOSAL_COUNT_BINS, |i| proposal_count_bin(i.n_candidates()))
}

/// Manager accuracy grouped by payout tier.
pub fn bin_by_reward(
    decisions: &[DecisionRecord],
    instances: &[ManagerInstance],
    coverage: Coverage,
) -> Result<BinReport, BenchError> {
    bin_by(decisions, instances, coverage, &REWARD_BINS, |i| reward_bin(i.price()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub a_only: usize,
    pub b_only: usize,
    pub shared: usize,
    /// `|A∖B| / |A|`; absent when A is empty.
    pub a_only_fraction: Option<f64>,
    pub a_only_ids: Vec<String>,
    pub b_only_ids: Vec<String>,
}

impl OverlapReport {
    pub fn to_text(&self) -> String {
        aligned(&[
            ("A only", self.a_only.to_string()),
            ("B only", self.b_only.to_string()),
            ("Shared", self.shared.to_string()),
            (
                "A-only fraction",
                match self.a_only_fraction {
                    Some(_) => format_ratio(self.a_only, self.a_only + self.shared, 4),
                    None => "-".to_string(),
                },
            ),
        ])
    }
}

/// `num/den` half-up to `dp` places as a plain fraction (not a percent).
pub fn format_ratio(num: usize, den: usize, dp: u32) -> String {
    if den == 0 {
        return "n/a".to_string();
    }
    let scale = 10u128.pow(dp);
    let scaled = num as u128 * scale;
    let den = den as u128;
    let mut q = scaled / den;
    if 2 * (scaled % den) >= den {
        q += 1;
    }
    format!("{}.{:0width$}", q / scale, q % scale, width = dp as usize)
}

pub fn overlap_analysis(set_a: &BTreeSet<String>, set_b: &BTreeSet<String>) -> OverlapReport {
    let a_only_ids: Vec<String> = set_a.difference(set_b).cloned().collect();
    let b_only_ids: Vec<String> = set_b.difference(set_a).cloned().collect();
    let shared = set_a.intersection(set_b).count();
    OverlapReport {
        a_only: a_only_ids.len(),
        b_only: b_only_ids.len(),
        shared,
        a_only_fraction: (!set_a.is_empty()).then(|| a_only_ids.len() as f64 / set_a.len() as f64),
        a_only_ids,
        b_only_ids,
    }
}

fn passed_ids(run: &[Verdict]) -> Result<(BTreeSet<String>, BTreeSet<String>), BenchError> {
    let mut all = BTreeSet::new();
    let mut passed = BTreeSet::new();
    for v in run {
        if !all.insert(v.instance_id.clone()) {
            return Err(BenchError::DuplicateDecision(v.instance_id.clone()));
        }
        if v.passed {
            passed.insert(v.instance_id.clone());
        }
    }
    Ok((all, passed))
}

/// Overlap of the solved sets of two runs over the same instances.
pub fn selector_overlap(run_a: &[Verdict], run_b: &[Verdict]) -> Result<OverlapReport, BenchError> {
    let (all_a, pass_a) = passed_ids(run_a)?;
    let (all_b, pass_b) = passed_ids(run_b)?;
    if all_a != all_b {
        return Err(BenchError::MismatchedInstanceSets {
            only_a: all_a.difference(&all_b).count(),
            only_b: all_b.difference(&all_a).count(),
        });
    }
    Ok(overlap_analysis(&pass_a, &pass_b))
}
