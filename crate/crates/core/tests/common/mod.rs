//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use propsel::bench::Verdict;
use propsel::fixtures::{spread, synthetic_instance, synthetic_issue};
use propsel::manager::DecisionRecord;
use propsel::model::{IssueRecord, ManagerInstance, Money};

/// 265 priced instances and two decision logs.
///
/// Instances come in three groups: 117 priced to $99,875, 24 to $52,875
/// and 124 to $111,750. Log `wide` matches the first two groups (141
/// instances, $152,750); log `narrow` matches only the first (117,
/// $99,875). Candidate counts are laid out so the matched instances fall
/// 29/38/17/29/28 into N = 2/3/4/5/6+ and the misses 10/23/19/28/44.
pub struct ManagerFixture {
    pub instances: Vec<ManagerInstance>,
    pub wide: Vec<DecisionRecord>,
    pub narrow: Vec<DecisionRecord>,
}

fn counts_to_ns(counts: [usize; 5]) -> Vec<usize> {
    let mut out = Vec::new();
    for (bin, &count) in counts.iter().enumerate() {
        for k in 0..count {
            // spread the open-ended bin over 6..=8
            out.push(if bin == 4 { 6 + k % 3 } else { bin + 2 });
        }
    }
    out
}

pub fn manager_fixture() -> ManagerFixture {
    let mut prices = spread(Money(99_875), 117, 25);
    prices.extend(spread(Money(52_875), 24, 25));
    prices.extend(spread(Money(111_750), 124, 25));
    let mut ns = counts_to_ns([29, 38, 17, 29, 28]);
    ns.extend(counts_to_ns([10, 23, 19, 28, 44]));

    let mut instances = Vec::new();
    let mut wide = Vec::new();
    let mut narrow = Vec::new();
    for (i, (price, n)) in prices.into_iter().zip(ns).enumerate() {
        let id = format!("m{i:03}");
        // ground truth rotates so a constant pick is never right by accident
        let gt = (i % n) as u32 + 1;
        let wrong = gt % n as u32 + 1;
        instances.push(synthetic_instance(&id, n, gt, price));
        wide.push(DecisionRecord::selected(&id, if i < 141 { gt } else { wrong }));
        narrow.push(DecisionRecord::selected(&id, if i < 117 { gt } else { wrong }));
    }
    ManagerFixture { instances, wide, narrow }
}

/// 198 issues totaling $189,300; the first 110 are priced to $86,625.
pub fn ic_fixture() -> Vec<IssueRecord> {
    let mut prices = spread(Money(86_625), 110, 25);
    prices.extend(spread(Money(102_675), 88, 25));
    prices
        .into_iter()
        .enumerate()
        .map(|(i, p)| synthetic_issue(&format!("c{i:03}"), p))
        .collect()
}

/// Verdicts passing exactly the first `n_pass` issues.
pub fn verdicts_passing_first(issues: &[IssueRecord], n_pass: usize) -> Vec<Verdict> {
    issues
        .iter()
        .enumerate()
        .map(|(i, issue)| Verdict::new(&issue.id, i < n_pass, issue.price))
        .collect()
}

/// Independent half-up check: does `num/den·100` print as `expected` at
/// `dp` places? Cross-multiplies instead of formatting.
pub fn rounds_to(num: u64, den: u64, expected: &str) -> bool {
    let (int, frac) = expected.split_once('.').unwrap_or((expected, ""));
    let dp = frac.len() as u32;
    let shown: u128 = format!("{int}{frac}").parse().unwrap();
    // shown - 0.5 <= num·100·10^dp / den < shown + 0.5, doubled to stay integral
    let lhs = 2 * u128::from(num) * 100 * 10u128.pow(dp);
    let den = u128::from(den);
    (2 * shown).saturating_sub(1) * den <= lhs && lhs < (2 * shown + 1) * den
}
