#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use simweave::harness::{Behavior, FakeDriverFactory};
use simweave::llm::{Cassette, Gateway};
use simweave::pipeline::Engine;
use simweave::prompts::Registry;
use simweave_server::{router, AppState, Store};
use tower::ServiceExt;

pub const CONTENT: &str =
    "Buoyancy: an object in a fluid is pushed up by a force equal to the weight \
of the fluid it displaces. Denser fluids and larger displaced volumes give a larger buoyant force. \
An object rises when the buoyant force exceeds its weight and sinks when it does not.";

pub fn fixture(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures/balloon")
        .join(file)
}

pub fn engine(gateway: Gateway) -> Engine {
    Engine::new(
        Arc::new(Registry::builtin().unwrap()),
        Arc::new(gateway.with_retry_delay(Duration::ZERO)),
        Arc::new(FakeDriverFactory::new(
            Behavior::load(&fixture("behavior.json")).unwrap(),
        )),
    )
    .with_settle(Duration::ZERO)
}

pub fn replay_engine() -> Engine {
    engine(Gateway::replay(
        Cassette::load(&fixture("cassette.ndjson")).unwrap(),
    ))
}

pub fn app_with(store: Arc<dyn Store>, engine: Engine) -> Router {
    router(AppState::new(engine, store))
}

pub struct Reply {
    pub status: StatusCode,
    pub text: String,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap_or_else(|e| panic!("{e}: {}", self.text))
    }
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> Reply {
    call_with(app, method, uri, body, &[]).await
}

pub async fn call_with(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<Value>,
    headers: &[(&str, &str)],
) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    Reply {
        status,
        text: String::from_utf8(bytes.to_vec()).unwrap(),
    }
}

pub async fn journal_len(app: &Router, id: &str) -> usize {
    call(app, Method::GET, &format!("/sessions/{id}/journal"), None)
        .await
        .text
        .lines()
        .count()
}

/// The scripted walkthrough after session creation: 24 requests.
pub fn walkthrough(id: &str) -> Vec<(Method, String, Option<Value>)> {
    let p = |path: &str| format!("/sessions/{id}{path}");
    vec![
        (
            Method::POST,
            p("/content"),
            Some(json!({ "text": CONTENT })),
        ),
        (Method::POST, p("/stages/concept/commit"), None),
        (Method::GET, p("/scenarios"), None),
        (
            Method::POST,
            p("/scenario"),
            Some(json!({ "choice": { "index": 0 } })),
        ),
        (Method::POST, p("/stages/scenario/commit"), None),
        (Method::GET, p("/goals"), None),
        (
            Method::POST,
            p("/goal"),
            Some(json!({ "choice": { "index": 1 } })),
        ),
        (Method::POST, p("/stages/learning-goal/commit"), None),
        (Method::POST, p("/generate"), None),
        (Method::POST, p("/stages/ui-graph/commit"), None),
        (Method::POST, p("/stages/code/commit"), None),
        (Method::POST, p("/tests/run"), None),
        (Method::POST, p("/tests/0/play"), None),
        (
            Method::POST,
            p("/tests/0/verdict"),
            Some(json!({ "verdict": "fail", "note": "There is no readout for the weight" })),
        ),
        (Method::POST, p("/suggestions/0/reject"), None),
        (
            Method::POST,
            p("/chat"),
            Some(json!({ "text": "Make the weight slider range from 5 to 105kg" })),
        ),
        (Method::POST, p("/suggestions/1/accept"), None),
        (Method::POST, p("/stages/code/commit"), None),
        (
            Method::POST,
            p("/annotations"),
            Some(json!({ "box": [180, 120, 140, 180] })),
        ),
        (Method::POST, p("/subgraph"), None),
        (Method::POST, p("/assumptions"), None),
        (
            Method::POST,
            p("/chat"),
            Some(json!({ "text": "Show the burner flame when it fires", "typeCode": 1 })),
        ),
        (Method::POST, p("/suggestions/2/accept"), None),
        (Method::POST, p("/share"), None),
    ]
}

pub async fn new_session(app: &Router) -> String {
    let r = call(app, Method::POST, "/sessions", None).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
    r.json()["session"]["sessionId"]
        .as_str()
        .unwrap()
        .to_string()
}

pub struct Walked {
    pub id: String,
    pub share: String,
    pub document: String,
    pub requests: usize,
}

/// Creates a session and runs the whole walkthrough, checking that every
/// request succeeds and journals at least one event.
pub async fn run_walkthrough(app: &Router) -> Walked {
    let id = new_session(app).await;
    let mut requests = 1;
    let mut share = String::new();
    for (method, uri, body) in walkthrough(&id) {
        let before = journal_len(app, &id).await;
        let r = call(app, method.clone(), &uri, body).await;
        requests += 1;
        assert!(
            r.status.is_success(),
            "{method} {uri}: {} {}",
            r.status,
            r.text
        );
        let after = journal_len(app, &id).await;
        assert!(after > before, "{uri} appended nothing");
        let body = r.json();
        assert_eq!(
            body["journalRef"].as_u64().unwrap() as usize,
            after - 1,
            "{uri}"
        );
        if uri.ends_with("/share") {
            share = body["simulationId"].as_str().unwrap().to_string();
        }
    }
    let code = call(
        app,
        Method::GET,
        &format!("/sessions/{id}/stages/code"),
        None,
    )
    .await
    .json();
    Walked {
        id,
        share,
        document: code["content"].as_str().unwrap().to_string(),
        requests,
    }
}
