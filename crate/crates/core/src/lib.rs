//! Proposal selection and golden-proposal synthesis for issue-resolution
//! agents, plus the benchmark, reward and curation tooling around it.
//!
//! Start with the runnable programs under `examples/`.

pub mod agents;
pub mod bench;
pub mod cli;
pub mod curate;
pub mod fixtures;
pub mod llm;
pub mod manager;
pub mod model;
pub mod p2a;
pub mod par;
pub mod prompt;
pub mod reward;
