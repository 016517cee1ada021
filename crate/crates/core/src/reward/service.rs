//! HTTP scoring service: `POST /score` and `POST /score_batch`.

use std::net::SocketAddr;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::{composite_reward_raw, ReferenceAnnotation, RewardBreakdown, RewardError, RewardWeights};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub raw_text: String,
    pub n_candidates: usize,
    pub reference: ReferenceAnnotation,
    #[serde(default)]
    pub weights: Option<RewardWeights>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

pub struct ScoreRejection(ScoreErrorBody);

impl IntoResponse for ScoreRejection {
    fn into_response(self) -> Response {
        (StatusCode::UNPROCESSABLE_ENTITY, Json(self.0)).into_response()
    }
}

/// Scores a single request. Used by both routes and by the CLI.
pub fn score_request(req: &ScoreRequest) -> Result<RewardBreakdown, RewardError> {
    let weights = req.weights.unwrap_or_default();
    weights.validate()?;
    composite_reward_raw(&req.raw_text, req.n_candidates, &req.reference, &weights)
}

async fn score(Json(req): Json<ScoreRequest>) -> Result<Json<RewardBreakdown>, ScoreRejection> {
    score_request(&req)
        .map(Json)
        .map_err(|e| ScoreRejection(ScoreErrorBody { error: e.to_string(), index: None }))
}

async fn score_batch(Json(reqs): Json<Vec<ScoreRequest>>) -> Result<Json<Vec<RewardBreakdown>>, ScoreRejection> {
    reqs.iter()
        .enumerate()
        .map(|(i, r)| {
            score_request(r).map_err(|e| ScoreRejection(ScoreErrorBody { error: e.to_string(), index: Some(i) }))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Json)
}

pub fn reward_router() -> Router {
    Router::new()
        .route("/score", post(score))
        .route("/score_batch", post(score_batch))
}

/// Serves until ctrl-c. Returns once the listener is closed.
pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("reward service listening on {}", listener.local_addr()?);
    serve_on(listener, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve_on<F>(listener: tokio::net::TcpListener, shutdown: F) -> std::io::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, reward_router()).with_graceful_shutdown(shutdown).await
}

/// Blocking wrapper that owns its runtime.
pub fn serve_blocking(addr: SocketAddr) -> std::io::Result<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(addr))
}
