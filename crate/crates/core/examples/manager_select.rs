// Render a manager prompt, ask a (scripted) model to pick the best
// candidate and parse its answer into a structured decision.

use std::error::Error;

use propsel::fixtures::{scripted_manager_backend, synthetic_instance};
use propsel::manager::{decide, ManagerRunConfig};
use propsel::model::Money;
use propsel::prompt::render_manager_prompt;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let instance = synthetic_instance("acme-7", 3, 2, Money(500));
    let prompt = render_manager_prompt(&instance);
    println!("prompt has {} candidates, {} chars", prompt.n_candidates, prompt.text.len());

    let backend = scripted_manager_backend("manager", 2);
    let decision = decide(&instance, backend.as_ref(), &ManagerRunConfig::default());
    let output = decision.output.as_ref().ok_or("manager failed")?;
    println!("selected #{} after {} attempt(s)", output.selected_id, decision.attempts);
    println!("golden problem: {}", output.golden.problem);

    let record = decision.to_record();
    println!("{}", serde_json::to_string(&record)?);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
