// Break accuracy down by candidate count and by reward tier, then compare
// which instances two selectors solved.

use std::error::Error;

use propsel::bench::{bin_by_proposal_count, bin_by_reward, selector_overlap, Coverage, Verdict};
use propsel::fixtures::synthetic_instance;
use propsel::manager::DecisionRecord;
use propsel::model::Money;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let instances: Vec<_> = (0..12)
        .map(|i| synthetic_instance(&format!("i{i}"), 2 + i % 6, 1, Money(200 + 400 * i as u64)))
        .collect();
    let log: Vec<_> = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| DecisionRecord::selected(inst.id(), if i % 3 == 0 { 2 } else { 1 }))
        .collect();

    let by_count = bin_by_proposal_count(&log, &instances, Coverage::Strict)?;
    print!("{}", by_count.to_text());
    print!("{}", bin_by_reward(&log, &instances, Coverage::Strict)?.to_csv());

    let run = |pass: fn(usize) -> bool| -> Vec<Verdict> {
        instances.iter().enumerate().map(|(i, inst)| Verdict::new(inst.id(), pass(i), inst.price())).collect()
    };
    let report = selector_overlap(&run(|i| i < 8), &run(|i| i > 3))?;
    print!("{}", report.to_text());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
