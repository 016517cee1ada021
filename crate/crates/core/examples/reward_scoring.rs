// Score raw manager completions against a reference annotation with the
// composite reward, including a custom weighting.

use std::error::Error;

use propsel::fixtures::sample_golden;
use propsel::prompt::render_canonical_response;
use propsel::reward::{composite_reward_raw, text_similarity, ReferenceAnnotation, RewardWeights};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let reference = ReferenceAnnotation {
        instance_id: "acme-9".into(),
        think: "Candidate 2 guards the parser without touching callers.".into(),
        justification: "Smallest change that removes the crash.".into(),
        golden: sample_golden("upload"),
        ground_truth_id: 2,
    };
    let weights = RewardWeights::default();

    let exact = render_canonical_response(&reference.think, 2, &reference.justification, &reference.golden);
    let close = render_canonical_response(
        "Candidate 2 guards the parser.",
        2,
        "Smallest safe change.",
        &sample_golden("upload"),
    );
    let wrong_pick = render_canonical_response(&reference.think, 1, &reference.justification, &reference.golden);
    for (label, raw) in [("exact", exact.as_str()), ("close", &close), ("wrong pick", &wrong_pick), ("garbage", "LGTM")] {
        let r = composite_reward_raw(raw, 3, &reference, &weights)?;
        println!("{label:>10}: r={:.3} sel={} format_ok={}", r.r, r.r_sel, r.format_ok);
    }

    let selection_only = RewardWeights::new(1.0, 0.0, 0.0, 0.0)?;
    println!("selection-only: {}", composite_reward_raw(&close, 3, &reference, &selection_only)?.r);
    println!("similarity: {:.4}", text_similarity("fix the crash", "fix crash now"));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
