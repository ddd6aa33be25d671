use std::sync::Arc;
use std::time::Duration;

use simweave::llm::{
    http_requests_issued, AnthropicProvider, Cassette, Gateway, GatewayMode, GatewaySettings,
    ImageInput, LlmError, LlmRequest, ScriptedProvider,
};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpListener;

fn concept_request() -> LlmRequest {
    LlmRequest::user("concept_graph", "Generate a diagram for buoyancy.")
}

#[tokio::test]
async fn record_then_replay_is_identical_and_offline() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ndjson");
    let provider = ScriptedProvider::new()
        .reply("concept_graph", "graph LR\n    Fluid[Fluid]")
        .reply("scenario_options", "{{A}} a|{{B}} b")
        .into_arc();
    let recorder = Gateway::record(provider.clone(), &path).unwrap();
    let first = recorder.complete(&concept_request()).await.unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
    let img_req =
        LlmRequest::user("scenario_options", "list").with_image(ImageInput::png(vec![9, 8, 7]));
    recorder.complete(&img_req).await.unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
    assert_eq!(provider.calls(), 2);

    let before = http_requests_issued();
    let replay = Gateway::replay_file(&path).unwrap();
    assert_eq!(replay.mode(), GatewayMode::Replay);
    assert_eq!(replay.complete(&concept_request()).await.unwrap(), first);
    assert_eq!(replay.complete(&img_req).await.unwrap(), "{{A}} a|{{B}} b");
    assert_eq!(provider.calls(), 2);
    assert_eq!(http_requests_issued(), before);
}

#[tokio::test]
async fn replay_miss_names_the_tag() {
    let replay = Gateway::replay(Cassette::default());
    match replay.complete(&concept_request()).await {
        Err(LlmError::ReplayMiss {
            tag, fingerprint, ..
        }) => {
            assert_eq!(tag, "concept_graph");
            assert_eq!(fingerprint, concept_request().fingerprint());
        }
        other => panic!("{other:?}"),
    }
}

#[tokio::test]
async fn repeated_requests_replay_in_recorded_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ndjson");
    let provider = ScriptedProvider::new()
        .reply("js_fix", "first")
        .reply("js_fix", "second")
        .into_arc();
    let rec = Gateway::record(provider, &path).unwrap();
    let req = LlmRequest::user("js_fix", "same prompt");
    rec.complete(&req).await.unwrap();
    rec.complete(&req).await.unwrap();
    let replay = Gateway::replay_file(&path).unwrap();
    assert_eq!(replay.complete(&req).await.unwrap(), "first");
    assert_eq!(replay.complete(&req).await.unwrap(), "second");
    assert_eq!(replay.complete(&req).await.unwrap(), "second");
    replay.rewind();
    assert_eq!(replay.complete(&req).await.unwrap(), "first");
}

#[tokio::test]
async fn transient_failure_is_retried_once() {
    let provider = ScriptedProvider::new()
        .fail("t", LlmError::provider(Some(529), "overloaded"))
        .reply("t", "ok")
        .into_arc();
    let gw = Gateway::live(provider.clone()).with_retry_delay(Duration::from_millis(2));
    assert_eq!(
        gw.complete(&LlmRequest::user("t", "x")).await.unwrap(),
        "ok"
    );
    assert_eq!(provider.calls(), 2);

    let provider = ScriptedProvider::new()
        .fail("t", LlmError::provider(Some(503), "a"))
        .fail("t", LlmError::provider(Some(503), "b"))
        .reply("t", "never reached")
        .into_arc();
    let gw = Gateway::live(provider.clone()).with_retry_delay(Duration::from_millis(2));
    assert!(matches!(
        gw.complete(&LlmRequest::user("t", "x")).await,
        Err(LlmError::Provider {
            status: Some(503),
            ..
        })
    ));
    assert_eq!(provider.calls(), 2);
}

#[tokio::test]
async fn permanent_failure_is_not_retried() {
    let provider = ScriptedProvider::new()
        .fail("t", LlmError::provider(Some(400), "bad request"))
        .into_arc();
    let gw = Gateway::live(provider.clone()).with_retry_delay(Duration::from_millis(2));
    assert!(gw.complete(&LlmRequest::user("t", "x")).await.is_err());
    assert_eq!(provider.calls(), 1);
}

#[tokio::test]
async fn slow_provider_times_out() {
    let provider = ScriptedProvider::new()
        .always("t", "late")
        .with_delay(Duration::from_millis(200))
        .into_arc();
    let gw = Gateway::live(provider.clone())
        .with_timeout(Duration::from_millis(20))
        .with_retry_delay(Duration::from_millis(2));
    assert_eq!(
        gw.complete(&LlmRequest::user("t", "x")).await,
        Err(LlmError::Timeout(Duration::from_millis(20)))
    );
    assert_eq!(provider.calls(), 2);
}

#[tokio::test]
async fn record_mode_does_not_write_failures() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ndjson");
    let provider = ScriptedProvider::new().into_arc();
    let gw = Gateway::record(provider, &path).unwrap();
    assert!(gw.complete(&LlmRequest::user("t", "x")).await.is_err());
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
}

#[test]
fn settings_from_lookup() {
    let env = |k: &str| match k {
        "SIMWEAVE_LLM_MODE" => Some("record".to_string()),
        "ANTHROPIC_API_KEY" => Some("k".to_string()),
        "SIMWEAVE_CASSETTE" => Some("/tmp/x.ndjson".to_string()),
        "SIMWEAVE_LLM_TIMEOUT_SECS" => Some("5".to_string()),
        _ => None,
    };
    let s = GatewaySettings::from_lookup(env).unwrap();
    assert_eq!(s.mode, GatewayMode::Record);
    assert_eq!(s.api_key.as_deref(), Some("k"));
    assert_eq!(s.timeout, Duration::from_secs(5));
    let replay = GatewaySettings::from_lookup(|_| None).unwrap();
    assert!(matches!(replay.build(), Err(LlmError::Config(_))));
    assert!(
        GatewaySettings::from_lookup(|k| (k == "SIMWEAVE_LLM_MODE").then(|| "bogus".into()))
            .is_err()
    );
}

/// One-shot HTTP server answering a single request with `status`/`body`,
/// returning the raw request it saw.
async fn one_shot_server(
    status: u16,
    body: &'static str,
) -> (String, tokio::task::JoinHandle<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = tokio::spawn(async move {
        let (mut sock, _) = listener.accept().await.unwrap();
        let mut buf = Vec::new();
        let mut chunk = [0u8; 4096];
        loop {
            let n = sock.read(&mut chunk).await.unwrap();
            buf.extend_from_slice(&chunk[..n]);
            let text = String::from_utf8_lossy(&buf);
            if let Some(split) = text.find("\r\n\r\n") {
                let len = text[..split]
                    .lines()
                    .find_map(|l| {
                        l.to_ascii_lowercase()
                            .strip_prefix("content-length:")
                            .map(|v| v.trim().parse::<usize>().unwrap())
                    })
                    .unwrap_or(0);
                if buf.len() >= split + 4 + len {
                    break;
                }
            }
            if n == 0 {
                break;
            }
        }
        let reply = format!(
            "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
            body.len()
        );
        sock.write_all(reply.as_bytes()).await.unwrap();
        String::from_utf8_lossy(&buf).into_owned()
    });
    (format!("http://{addr}"), handle)
}

#[tokio::test]
async fn anthropic_binding_round_trip() {
    let (url, server) = one_shot_server(
        200,
        r#"{"content":[{"type":"text","text":"graph LR"},{"type":"text","text":"\n    A[A]"}]}"#,
    )
    .await;
    let before = http_requests_issued();
    let gw = Gateway::live(Arc::new(AnthropicProvider::new(
        url,
        "secret",
        "test-model",
    )));
    let out = gw
        .complete(&concept_request().with_image(ImageInput::png(vec![1])))
        .await
        .unwrap();
    assert_eq!(out, "graph LR\n    A[A]");
    assert_eq!(http_requests_issued(), before + 1);
    let seen = server.await.unwrap();
    assert!(seen.starts_with("POST /v1/messages"));
    assert!(seen.contains("x-api-key: secret"));
    assert!(seen.contains("\"model\":\"test-model\""));
    assert!(seen.contains("\"media_type\":\"image/png\""));
}

#[tokio::test]
async fn anthropic_error_status_is_reported() {
    let (url, _server) = one_shot_server(400, r#"{"error":{"message":"bad"}}"#).await;
    let gw = Gateway::live(Arc::new(AnthropicProvider::new(url, "k", "m")));
    match gw.complete(&concept_request()).await {
        Err(LlmError::Provider {
            status,
            excerpt,
            transient,
        }) => {
            assert_eq!(status, Some(400));
            assert!(excerpt.contains("bad"));
            assert!(!transient);
        }
        other => panic!("{other:?}"),
    }
}
