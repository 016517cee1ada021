// Score a manager decision log against a dataset: Match% and Earned%.

use std::error::Error;

use propsel::bench::{score_manager_run, Coverage};
use propsel::fixtures::synthetic_instance;
use propsel::manager::DecisionRecord;
use propsel::model::Money;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let instances = vec![
        synthetic_instance("a", 2, 1, Money(1_000)),
        synthetic_instance("b", 3, 3, Money(250)),
        synthetic_instance("c", 4, 2, Money(4_000)),
    ];
    let log = vec![
        DecisionRecord::selected("a", 1),
        DecisionRecord::selected("b", 3),
        DecisionRecord::failed("c", "format_error"),
    ];
    let score = score_manager_run(&log, &instances, Coverage::Strict)?;
    print!("{}", score.to_text());
    println!("{}", serde_json::to_string_pretty(&score.to_report_json())?);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
