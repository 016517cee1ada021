// Score individual-contributor verdicts: pass rate and dollars earned.

use std::error::Error;

use propsel::bench::{score_ic_run, Coverage, Verdict};
use propsel::fixtures::synthetic_issue;
use propsel::model::Money;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let issues = vec![
        synthetic_issue("ic-1", Money(250)),
        synthetic_issue("ic-2", Money(1_000)),
        synthetic_issue("ic-3", Money(8_000)),
    ];
    let verdicts = vec![
        Verdict::new("ic-1", true, Money(250)),
        Verdict::new("ic-2", true, Money(1_000)),
        Verdict::new("ic-3", false, Money(8_000)),
    ];
    let score = score_ic_run(&verdicts, &issues, Coverage::Strict)?;
    print!("{}", score.to_text());

    // partial runs are refused unless asked for
    assert!(score_ic_run(&verdicts[..2], &issues, Coverage::Strict).is_err());
    let partial = score_ic_run(&verdicts[..2], &issues, Coverage::AllowPartial)?;
    println!("partial: {} of {} missing", partial.n_missing, partial.n_total);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
