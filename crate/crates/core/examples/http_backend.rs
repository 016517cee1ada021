// Configure an OpenAI-compatible backend from JSON and wrap a mock in a
// recorder so its answers can be replayed later without a network.

use std::error::Error;
use std::sync::Arc;

use serde_json::json;

use propsel::llm::{backend_from_value, ChatBackend, ChatMessage, ChatRequest, MockBackend, RecordingBackend};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    // an HTTP backend is built lazily; nothing is sent here
    let http = backend_from_value(&json!({
        "base_url": "http://127.0.0.1:9/v1",
        "model": "local-model",
        "api_key_env": "NO_SUCH_KEY",
        "max_retries": 1
    }))?;
    println!("configured {}", http.model());

    let live = RecordingBackend::new(MockBackend::sequential("mock", ["first answer", "second answer"]));
    let req = ChatRequest::new("mock", vec![ChatMessage::user("Which proposal?")]);
    println!("live: {}", live.complete(&req)?.content);

    let replay = Arc::new(MockBackend::keyed("mock", live.recorded()));
    println!("replayed: {}", replay.complete(&req)?.content);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
