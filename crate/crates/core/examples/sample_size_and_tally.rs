// Size an annotation sample and tally the selection rationales it yields.

use std::error::Error;

use propsel::curate::{required_sample_size, tally_rationales, Confidence, Criterion, SelectionRationale, Theme};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for (pop, conf) in [(2852, Confidence::P95), (2852, Confidence::P99), (500, Confidence::P90)] {
        println!("N={pop} at {conf:?}: n={}", required_sample_size(pop, 0.05, conf)?);
    }

    let tags = vec![
        SelectionRationale::new(Criterion::MinimalVerifiableChange),
        SelectionRationale::new(Criterion::MinimalVerifiableChange),
        SelectionRationale::new(Criterion::RootCauseElimination),
        SelectionRationale::with_theme(Theme::Maintainability, Criterion::Extensibility)?,
    ];
    print!("{}", tally_rationales(&tags).to_text());

    // a criterion filed under the wrong theme is an error
    assert!(SelectionRationale::with_theme(Theme::FixDepth, Criterion::ControlledScope).is_err());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
