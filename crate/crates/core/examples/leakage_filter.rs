// Drop training instances that point at a benchmark issue, by id or by
// (repo, issue number).

use std::error::Error;

use propsel::curate::{filter_leakage, BenchmarkKeys};
use propsel::fixtures::{synthetic_instance, synthetic_issue};
use propsel::model::Money;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut train: Vec<_> = (0..6).map(|i| synthetic_instance(&format!("train-{i}"), 2, 1, Money(100))).collect();
    train[4].issue.repo = "acme/web".into();
    train[4].issue.issue_number = 4512;

    let mut held_out = synthetic_issue("bench-4512", Money(100));
    held_out.repo = "acme/web".into();
    held_out.issue_number = 4512;
    let mut keys = BenchmarkKeys::from_issues([&held_out]);
    keys.ids.insert("train-1".into());

    let (kept, report) = filter_leakage(train, &keys);
    println!("kept {} of {}", report.n_kept, report.n_input);
    for removed in &report.removed {
        println!("removed {} ({}#{})", removed.id, removed.repo, removed.issue_number);
    }
    let (again, _) = filter_leakage(kept.clone(), &keys);
    assert_eq!(again, kept);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
