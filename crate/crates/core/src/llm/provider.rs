use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde_json::{json, Value};
use thiserror::Error;

use super::request::{LlmRequest, Role};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("provider error (status {status:?}): {excerpt}")]
    Provider {
        status: Option<u16>,
        excerpt: String,
        transient: bool,
    },
    #[error("no recorded exchange for fingerprint {fingerprint} (tag `{tag}`); {hint}")]
    ReplayMiss {
        fingerprint: String,
        tag: String,
        hint: String,
    },
    #[error("provider call timed out after {0:?}")]
    Timeout(Duration),
    #[error("cassette: {0}")]
    Cassette(String),
    #[error("gateway configuration: {0}")]
    Config(String),
}

impl LlmError {
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            LlmError::Provider {
                transient: true,
                ..
            } | LlmError::Timeout(_)
        )
    }

    pub fn provider(status: Option<u16>, excerpt: impl Into<String>) -> Self {
        let transient = match status {
            None => true,
            Some(s) => s == 408 || s == 429 || s >= 500,
        };
        LlmError::Provider {
            status,
            excerpt: excerpt.into(),
            transient,
        }
    }
}

/// A completion backend. Gateways wrap providers with timeout, retry and
/// recording; providers only translate a request into a reply.
#[async_trait]
pub trait Provider: Send + Sync {
    async fn complete(&self, req: &LlmRequest) -> Result<String, LlmError>;
}

static HTTP_REQUESTS: AtomicU64 = AtomicU64::new(0);

/// Number of HTTP calls issued by every [`AnthropicProvider`] in this
/// process. Tests use it as a network guard for replay mode.
pub fn http_requests_issued() -> u64 {
    HTTP_REQUESTS.load(Ordering::SeqCst)
}

pub const DEFAULT_BASE_URL: &str = "https://api.anthropic.com";
pub const DEFAULT_MODEL: &str = "claude-3-5-sonnet-latest";

/// Messages API binding.
pub struct AnthropicProvider {
    client: reqwest::Client,
    base_url: String,
    api_key: String,
    model: String,
    temperature: f32,
}

impl AnthropicProvider {
    pub fn new(
        base_url: impl Into<String>,
        api_key: impl Into<String>,
        model: impl Into<String>,
    ) -> Self {
        Self {
            client: reqwest::Client::new(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            model: model.into(),
            temperature: 0.0,
        }
    }

    pub fn with_temperature(mut self, temperature: f32) -> Self {
        self.temperature = temperature;
        self
    }

    fn body(&self, req: &LlmRequest) -> Value {
        let last_user = req.messages.iter().rposition(|m| m.role == Role::User);
        let messages: Vec<Value> = req
            .messages
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let mut content = Vec::new();
                if Some(i) == last_user {
                    for img in &req.images {
                        content.push(json!({
                            "type": "image",
                            "source": {"type": "base64", "media_type": img.mime_type, "data": B64.encode(&img.bytes)},
                        }));
                    }
                }
                content.push(json!({"type": "text", "text": m.text}));
                json!({"role": m.role.as_str(), "content": content})
            })
            .collect();
        json!({
            "model": self.model,
            "max_tokens": req.max_tokens,
            "temperature": self.temperature,
            "messages": messages,
        })
    }
}

fn excerpt(body: &str) -> String {
    body.chars().take(300).collect()
}

#[async_trait]
impl Provider for AnthropicProvider {
    async fn complete(&self, req: &LlmRequest) -> Result<String, LlmError> {
        HTTP_REQUESTS.fetch_add(1, Ordering::SeqCst);
        let resp = self
            .client
            .post(format!("{}/v1/messages", self.base_url))
            .header("x-api-key", &self.api_key)
            .header("anthropic-version", "2023-06-01")
            .json(&self.body(req))
            .send()
            .await
            .map_err(|e| LlmError::provider(None, e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| LlmError::provider(None, e.to_string()))?;
        if !status.is_success() {
            return Err(LlmError::provider(Some(status.as_u16()), excerpt(&text)));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| {
            LlmError::provider(Some(status.as_u16()), format!("{e}: {}", excerpt(&text)))
        })?;
        let parts: Vec<&str> = v["content"]
            .as_array()
            .into_iter()
            .flatten()
            .filter(|c| c["type"] == "text")
            .filter_map(|c| c["text"].as_str())
            .collect();
        if parts.is_empty() {
            return Err(LlmError::provider(
                Some(status.as_u16()),
                format!("no text content: {}", excerpt(&text)),
            ));
        }
        Ok(parts.concat())
    }
}

type Responder = Box<dyn Fn(&LlmRequest) -> Option<Result<String, LlmError>> + Send + Sync>;

/// In-process provider with replies queued per template tag. Used for
/// fixtures, recording cassettes offline and failure injection.
#[derive(Default)]
pub struct ScriptedProvider {
    queues: Mutex<HashMap<String, VecDeque<Result<String, LlmError>>>>,
    sticky: Mutex<HashMap<String, String>>,
    responder: Option<Responder>,
    delay: Option<Duration>,
    calls: AtomicUsize,
    log: Mutex<Vec<LlmRequest>>,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues a one-shot reply for `tag`.
    pub fn reply(self, tag: impl Into<String>, text: impl Into<String>) -> Self {
        self.push(tag, Ok(text.into()));
        self
    }

    /// Queues a one-shot failure for `tag`.
    pub fn fail(self, tag: impl Into<String>, err: LlmError) -> Self {
        self.push(tag, Err(err));
        self
    }

    /// Reply used for `tag` whenever its queue is empty.
    pub fn always(self, tag: impl Into<String>, text: impl Into<String>) -> Self {
        self.sticky.lock().unwrap().insert(tag.into(), text.into());
        self
    }

    /// Fallback consulted when neither a queued nor a sticky reply exists.
    pub fn responder(
        mut self,
        f: impl Fn(&LlmRequest) -> Option<Result<String, LlmError>> + Send + Sync + 'static,
    ) -> Self {
        self.responder = Some(Box::new(f));
        self
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn push(&self, tag: impl Into<String>, step: Result<String, LlmError>) {
        self.queues
            .lock()
            .unwrap()
            .entry(tag.into())
            .or_default()
            .push_back(step);
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<LlmRequest> {
        self.log.lock().unwrap().clone()
    }

    pub fn into_arc(self) -> Arc<Self> {
        Arc::new(self)
    }

    /// Queues the replies of a script file: `[[reply]]` tables with `tag`
    /// and `text`, in call order.
    pub fn from_toml(text: &str) -> Result<Self, LlmError> {
        #[derive(serde::Deserialize)]
        struct Script {
            #[serde(default)]
            reply: Vec<ScriptedReply>,
        }
        #[derive(serde::Deserialize)]
        struct ScriptedReply {
            tag: String,
            text: String,
        }
        let script: Script =
            toml::from_str(text).map_err(|e| LlmError::Config(format!("reply script: {e}")))?;
        let p = Self::new();
        for r in script.reply {
            p.push(r.tag, Ok(r.text));
        }
        Ok(p)
    }
}

#[async_trait]
impl Provider for ScriptedProvider {
    async fn complete(&self, req: &LlmRequest) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log.lock().unwrap().push(req.clone());
        if let Some(d) = self.delay {
            tokio::time::sleep(d).await;
        }
        let queued = self
            .queues
            .lock()
            .unwrap()
            .get_mut(&req.tag)
            .and_then(VecDeque::pop_front);
        if let Some(step) = queued {
            return step;
        }
        if let Some(text) = self.sticky.lock().unwrap().get(&req.tag) {
            return Ok(text.clone());
        }
        if let Some(step) = self.responder.as_ref().and_then(|f| f(req)) {
            return step;
        }
        Err(LlmError::Provider {
            status: None,
            excerpt: format!("no scripted reply for tag `{}`", req.tag),
            transient: false,
        })
    }
}

#[async_trait]
impl<P: Provider + ?Sized> Provider for Arc<P> {
    async fn complete(&self, req: &LlmRequest) -> Result<String, LlmError> {
        (**self).complete(req).await
    }
}
