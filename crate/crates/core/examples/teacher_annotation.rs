// Turn labeled instances into supervised targets with a teacher model and
// report prompt-length statistics for the result.

use std::error::Error;

use propsel::curate::{build_sft_targets, token_length_stats, whitespace_count, CurateError};
use propsel::fixtures::{scripted_manager_backend, synthetic_instance};
use propsel::manager::ManagerRunConfig;
use propsel::model::Money;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    // the scripted teacher always answers #2, so the third instance fails
    let instances = vec![
        synthetic_instance("sft-1", 3, 2, Money(100)),
        synthetic_instance("sft-2", 4, 2, Money(100)),
        synthetic_instance("sft-3", 2, 1, Money(100)),
    ];
    let teacher = scripted_manager_backend("teacher", 2);
    let results = build_sft_targets(&instances, teacher.as_ref(), &ManagerRunConfig::default(), 2);
    for result in &results {
        match result {
            Ok(a) => println!("{}: golden problem {:?}", a.instance.id(), a.reference.golden.problem),
            Err(e) => println!("rejected: {e}"),
        }
    }
    assert!(matches!(results[2], Err(CurateError::TeacherDisagreement { .. })));

    let stats = token_length_stats(&instances, &whitespace_count)?;
    println!("prompt tokens: mean {:.1}, p90 {}, max {}", stats.mean, stats.p90, stats.max);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
