// Run shell commands under the agent executor limits, then drive a
// scripted proposal agent through a workspace.

use std::error::Error;

use propsel::agents::{execute_command, run_proposal_agent, AgentLimits};
use propsel::fixtures::{scripted_proposal_backend, seed_workspace, synthetic_issue};
use propsel::model::Money;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let tmp = tempfile::tempdir()?;
    seed_workspace(tmp.path(), "demo")?;

    let limits = AgentLimits { command_timeout_s: 0.5, max_observation_chars: 64, ..AgentLimits::default() };
    let listing = execute_command("ls src", tmp.path(), &limits)?;
    println!("ls -> exit {} {:?}", listing.exit_code, listing.stdout.trim());
    let long = execute_command("seq 1 1000", tmp.path(), &limits)?;
    println!("seq -> truncated={} ({} chars kept)", long.truncated, long.stdout.len());
    let slow = execute_command("sleep 5", tmp.path(), &limits)?;
    println!("sleep -> timed_out={} exit {}", slow.timed_out, slow.exit_code);

    let backend = scripted_proposal_backend("proposer", "upload");
    let (proposal, transcript) =
        run_proposal_agent(&synthetic_issue("demo-1", Money(100)), tmp.path(), backend.as_ref(), &AgentLimits::default())
            .map_err(|f| f.error)?;
    println!("{} turns, status {:?}", transcript.turns.len(), transcript.terminal_status);
    println!("root cause: {}", proposal.root_cause.unwrap_or_default());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
