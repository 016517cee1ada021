use serde_json::{json, Value};

use propsel::fixtures::sample_golden;
use propsel::prompt::render_canonical_response;
use propsel::reward::service::serve_on;

/// Starts the service on an ephemeral port. The server stops when the
/// returned runtime is dropped.
fn start() -> (tokio::runtime::Runtime, String) {
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(1).enable_all().build().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    rt.spawn(serve_on(listener, std::future::pending()));
    (rt, base)
}

fn request(raw_text: &str, n: usize) -> Value {
    json!({
        "raw_text": raw_text,
        "n_candidates": n,
        "reference": {
            "think": "weigh scope",
            "justification": "smallest change",
            "golden": sample_golden("svc"),
            "ground_truth_id": 2
        }
    })
}

fn post(url: &str, body: &Value) -> (u16, Value) {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut resp = agent.post(url).send_json(body).unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap())
}

#[test]
fn score_endpoints_round_trip() {
    let (_rt, base) = start();
    let exact = render_canonical_response("weigh scope", 2, "smallest change", &sample_golden("svc"));

    let (status, body) = post(&format!("{base}/score"), &request(&exact, 3));
    assert_eq!(status, 200);
    assert!((body["r"].as_f64().unwrap() - 1.0).abs() < 1e-12, "{body}");
    assert_eq!(body["format_ok"], 1);

    let (status, body) = post(&format!("{base}/score"), &request("no structure", 3));
    assert_eq!(status, 200);
    assert_eq!((body["r"].as_f64(), body["format_ok"].as_u64()), (Some(0.0), Some(0)));

    let mut weighted = request(&exact, 3);
    weighted["weights"] = json!({"w_sel": 1.0, "w_think": 0.0, "w_justi": 0.0, "w_gold": 0.0});
    let (status, body) = post(&format!("{base}/score"), &weighted);
    assert_eq!(status, 200);
    assert_eq!(body["r"], 1.0);

    let batch = json!([request(&exact, 3), request("junk", 3)]);
    let (status, body) = post(&format!("{base}/score_batch"), &batch);
    assert_eq!(status, 200);
    assert_eq!(body.as_array().unwrap().len(), 2);
    assert_eq!(body[1]["r"], 0.0);
}

#[test]
fn invalid_requests_are_rejected() {
    let (_rt, base) = start();
    let (status, body) = post(&format!("{base}/score"), &request("x", 1));
    assert_eq!(status, 422);
    assert!(body["error"].as_str().unwrap().contains('2'), "{body}");

    let mut bad_weights = request("x", 3);
    bad_weights["weights"] = json!({"w_sel": 0.9, "w_think": 0.9, "w_justi": 0.0, "w_gold": 0.0});
    assert_eq!(post(&format!("{base}/score"), &bad_weights).0, 422);

    let batch = json!([request("x", 3), request("x", 3), request("x", 0)]);
    let (status, body) = post(&format!("{base}/score_batch"), &batch);
    assert_eq!(status, 422);
    assert_eq!(body["index"], 2);
}
