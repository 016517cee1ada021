// End-to-end proposal-to-action run: several proposal agents, a manager
// that synthesizes a golden proposal, and an implementation agent that
// turns it into a patch. Outputs land in a temporary directory.

use std::error::Error;

use propsel::fixtures::{
    broken_proposal_backend, scripted_implementation_backend, scripted_manager_backend, scripted_proposal_backend,
    seed_workspace, synthetic_issue,
};
use propsel::model::Money;
use propsel::p2a::{run_p2a_batch, write_p2a_outputs, P2AConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let tmp = tempfile::tempdir()?;
    let issues: Vec<_> = (1..=3).map(|i| synthetic_issue(&format!("shop-{i}"), Money(250 * i))).collect();
    let mut workspaces = Vec::new();
    for issue in &issues {
        let dir = tmp.path().join("ws").join(&issue.id);
        seed_workspace(&dir, &issue.id)?;
        workspaces.push(dir);
    }

    let config = P2AConfig::new(
        vec![
            scripted_proposal_backend("proposer-a", "checkout"),
            scripted_proposal_backend("proposer-b", "cart"),
            broken_proposal_backend("proposer-c"),
        ],
        scripted_manager_backend("manager", 1),
        scripted_implementation_backend("implementer"),
    )?;
    let results = run_p2a_batch(&issues, &workspaces, &config, 2)?;
    for r in &results {
        let files = r.patch.as_ref().map(|p| p.files_touched.join(", ")).unwrap_or_default();
        println!("{}: {:?}, pool of {}, touched [{files}]", r.instance_id, r.status, r.pool.len());
    }

    let out = tmp.path().join("out");
    write_p2a_outputs(&results, &issues, &out)?;
    println!("{}", std::fs::read_to_string(out.join("diffs/shop-1.diff"))?);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
