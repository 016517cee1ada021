// Load a manager dataset from JSONL, validate it and print summary stats.

use std::error::Error;
use std::io::Cursor;

use propsel::fixtures::synthetic_instance;
use propsel::model::{dataset_stats, read_jsonl_from, to_jsonl_string, validate_dataset, ManagerInstance, Money};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let instances = vec![
        synthetic_instance("acme-101", 3, 2, Money(250)),
        synthetic_instance("acme-102", 5, 1, Money(1_200)),
    ];
    let text = to_jsonl_string(&instances);

    let loaded: Vec<ManagerInstance> = read_jsonl_from(Cursor::new(text.as_bytes()), "inline")?;
    validate_dataset(&loaded)?;
    let stats = dataset_stats(&loaded);
    println!("{} issues, {} proposals, {} total", stats.n_issues, stats.n_proposals, stats.total_price);

    // a ground truth outside 1..=N is rejected
    let mut broken = loaded[0].clone();
    broken.ground_truth_id = 7;
    let err = validate_dataset(&[broken]).unwrap_err();
    println!("rejected: {err}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
