//! Drive the HTTP API in-process: create a session, submit content over
//! the recorded balloon cassette and read back the concept stage.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use simweave::harness::{Behavior, FakeDriverFactory};
use simweave::llm::Gateway;
use simweave::pipeline::Engine;
use simweave::prompts::Registry;
use simweave_server::{router, AppState, MemoryStore};
use tower::ServiceExt;

async fn send(app: &axum::Router, method: Method, uri: &str, body: Option<Value>) -> Value {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    println!("{status} {uri}");
    serde_json::from_slice(&bytes).unwrap_or(Value::Null)
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/balloon");
    let engine = Engine::new(
        Arc::new(Registry::builtin()?),
        Arc::new(Gateway::replay_file(&dir.join("cassette.ndjson"))?),
        Arc::new(FakeDriverFactory::new(Behavior::load(
            &dir.join("behavior.json"),
        )?)),
    )
    .with_settle(Duration::ZERO);
    let app = router(AppState::new(engine, Arc::new(MemoryStore::new())));

    let created = send(&app, Method::POST, "/sessions", None).await;
    let id = created["session"]["sessionId"]
        .as_str()
        .unwrap()
        .to_string();
    let text = "Buoyancy: an object in a fluid is pushed up by a force equal to the weight \
of the fluid it displaces. Denser fluids and larger displaced volumes give a larger buoyant force. \
An object rises when the buoyant force exceeds its weight and sinks when it does not.";
    send(
        &app,
        Method::POST,
        &format!("/sessions/{id}/content"),
        Some(json!({ "text": text })),
    )
    .await;
    let stage = send(
        &app,
        Method::GET,
        &format!("/sessions/{id}/stages/concept"),
        None,
    )
    .await;
    println!(
        "{} ({})\n{}",
        stage["stage"],
        stage["status"],
        stage["content"].as_str().unwrap_or("")
    );

    let missing = send(
        &app,
        Method::POST,
        &format!("/sessions/{id}/stages/code/commit"),
        None,
    )
    .await;
    println!("error body: {missing}");
    Ok(())
}
