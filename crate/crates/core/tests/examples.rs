mod validate_dataset {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/validate_dataset.rs"));
}

mod manager_select {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/manager_select.rs"));
}

mod score_manager {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/score_manager.rs"));
}

mod ic_scoring {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/ic_scoring.rs"));
}

mod bins_and_overlap {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/bins_and_overlap.rs"));
}

mod reward_scoring {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/reward_scoring.rs"));
}

mod sample_size_and_tally {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/sample_size_and_tally.rs"));
}

mod leakage_filter {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/leakage_filter.rs"));
}

mod teacher_annotation {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/teacher_annotation.rs"));
}

mod agent_executor {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/agent_executor.rs"));
}

mod p2a_pipeline {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/p2a_pipeline.rs"));
}

mod http_backend {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/http_backend.rs"));
}


#[test]
fn validate_dataset_runs() {
    validate_dataset::run_example().expect("validate dataset example should run");
}

#[test]
fn manager_select_runs() {
    manager_select::run_example().expect("manager select example should run");
}

#[test]
fn score_manager_runs() {
    score_manager::run_example().expect("score manager example should run");
}

#[test]
fn ic_scoring_runs() {
    ic_scoring::run_example().expect("ic scoring example should run");
}

#[test]
fn bins_and_overlap_runs() {
    bins_and_overlap::run_example().expect("bins and overlap example should run");
}

#[test]
fn reward_scoring_runs() {
    reward_scoring::run_example().expect("reward scoring example should run");
}

#[test]
fn sample_size_and_tally_runs() {
    sample_size_and_tally::run_example().expect("sample size and tally example should run");
}

#[test]
fn leakage_filter_runs() {
    leakage_filter::run_example().expect("leakage filter example should run");
}

#[test]
fn teacher_annotation_runs() {
    teacher_annotation::run_example().expect("teacher annotation example should run");
}

#[test]
fn agent_executor_runs() {
    agent_executor::run_example().expect("agent executor example should run");
}

#[test]
fn p2a_pipeline_runs() {
    p2a_pipeline::run_example().expect("p2a pipeline example should run");
}

#[test]
fn http_backend_runs() {
    http_backend::run_example().expect("http backend example should run");
}
