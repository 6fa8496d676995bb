//! All mock services behind one HTTP listener.

use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use storyreason::oracles::{
    ChatRequest, ChatService, GradientRequest, GradientService, LossRequest, LossService,
    MockCaption, MockChat, MockFixtures, MockGradient, MockLoss, MockSegmentation,
};
use storyreason::perception::{CaptionRequest, CaptionService, SegmentRequest, SegmentationService};
use storyreason::TransportError;

struct Mocks {
    segmentation: MockSegmentation,
    caption: MockCaption,
    chat: MockChat,
    loss: MockLoss,
    gradient: MockGradient,
}

type Shared = Arc<Mocks>;

fn reply<T: serde::Serialize>(result: Result<T, TransportError>) -> Response {
    match result {
        Ok(body) => Json(body).into_response(),
        Err(e) => (StatusCode::BAD_GATEWAY, Json(json!({ "error": e.to_string() }))).into_response(),
    }
}

async fn segment(State(m): State<Shared>, Json(req): Json<SegmentRequest>) -> Response {
    reply(m.segmentation.segment(&req))
}

async fn caption(State(m): State<Shared>, Json(req): Json<CaptionRequest>) -> Response {
    reply(m.caption.caption(&req))
}

async fn chat(State(m): State<Shared>, Json(req): Json<ChatRequest>) -> Response {
    reply(m.chat.complete(&req))
}

async fn loss(State(m): State<Shared>, Json(req): Json<LossRequest>) -> Response {
    if req.target.trim().is_empty() {
        return (StatusCode::BAD_REQUEST, Json(json!({ "error": "empty target" }))).into_response();
    }
    reply(m.loss.loss(&req))
}

async fn gradients(State(m): State<Shared>, Json(req): Json<GradientRequest>) -> Response {
    reply(m.gradient.segment_gradients(&req))
}

async fn healthz() -> &'static str {
    "ok"
}

pub fn router(fixtures: &MockFixtures) -> Router {
    let mocks = Arc::new(Mocks {
        segmentation: fixtures.segmentation(),
        caption: fixtures.caption(),
        chat: fixtures.chat_service(),
        loss: MockLoss::new(fixtures.loss_rule),
        gradient: fixtures.gradient(),
    });
    Router::new()
        .route("/v1/segment", post(segment))
        .route("/v1/caption", post(caption))
        .route("/v1/chat", post(chat))
        .route("/v1/loss", post(loss))
        .route("/v1/segment_gradients", post(gradients))
        .route("/healthz", get(healthz))
        .with_state(mocks)
}

pub async fn serve(listener: tokio::net::TcpListener, fixtures: &MockFixtures) -> std::io::Result<()> {
    axum::serve(listener, router(fixtures)).await
}

/// Starts the mock host on a background thread and returns its base URL.
/// The server lives until the process exits.
pub fn spawn_background(fixtures: MockFixtures, addr: &str) -> std::io::Result<String> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
    let url = format!("http://{}", listener.local_addr()?);
    std::thread::spawn(move || {
        runtime.block_on(async move {
            if let Err(e) = serve(listener, &fixtures).await {
                log::error!("mock server stopped: {e}");
            }
        })
    });
    Ok(url)
}
