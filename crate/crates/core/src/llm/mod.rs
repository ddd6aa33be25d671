//! Completion gateway with live, record and replay modes.
//!
//! Replay mode holds no provider at all, so it cannot reach the network.

mod cassette;
mod provider;
mod request;

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;

pub use cassette::Cassette;
pub use provider::{
    http_requests_issued, AnthropicProvider, LlmError, Provider, ScriptedProvider,
    DEFAULT_BASE_URL, DEFAULT_MODEL,
};
pub use request::{
    normalize_text, ImageInput, LlmExchange, LlmRequest, Message, Role, DEFAULT_MAX_TOKENS,
};

use cassette::{CassetteWriter, ReplayIndex};
pub(crate) use request::{de_b64, ser_b64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatewayMode {
    Live,
    Record,
    Replay,
}

impl FromStr for GatewayMode {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(GatewayMode::Live),
            "record" => Ok(GatewayMode::Record),
            "replay" => Ok(GatewayMode::Replay),
            other => Err(LlmError::Config(format!("unknown gateway mode `{other}`"))),
        }
    }
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

enum Backend {
    Live(Arc<dyn Provider>),
    Record(Arc<dyn Provider>, CassetteWriter),
    Replay(ReplayIndex),
}

pub struct Gateway {
    backend: Backend,
    timeout: Duration,
    retry_delay: Duration,
}

impl Gateway {
    pub fn live(provider: Arc<dyn Provider>) -> Self {
        Self::with_backend(Backend::Live(provider))
    }

    /// Calls the provider and appends every successful exchange to `path`.
    pub fn record(provider: Arc<dyn Provider>, path: &Path) -> Result<Self, LlmError> {
        Ok(Self::with_backend(Backend::Record(
            provider,
            CassetteWriter::open(path)?,
        )))
    }

    pub fn replay(cassette: Cassette) -> Self {
        Self::with_backend(Backend::Replay(ReplayIndex::new(cassette)))
    }

    pub fn replay_file(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::replay(Cassette::load(path)?))
    }

    fn with_backend(backend: Backend) -> Self {
        Self {
            backend,
            timeout: DEFAULT_TIMEOUT,
            retry_delay: Duration::from_millis(500),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Base delay before the single retry; the actual wait is jittered
    /// between half and one and a half times this value.
    pub fn with_retry_delay(mut self, delay: Duration) -> Self {
        self.retry_delay = delay;
        self
    }

    pub fn mode(&self) -> GatewayMode {
        match self.backend {
            Backend::Live(_) => GatewayMode::Live,
            Backend::Record(..) => GatewayMode::Record,
            Backend::Replay(_) => GatewayMode::Replay,
        }
    }

    /// Rewinds per-fingerprint replay cursors so the cassette can be
    /// replayed again from the start. No-op in other modes.
    pub fn rewind(&self) {
        if let Backend::Replay(index) = &self.backend {
            index.reset();
        }
    }

    pub async fn complete(&self, req: &LlmRequest) -> Result<String, LlmError> {
        Ok(self.exchange(req).await?.response_text)
    }

    pub async fn exchange(&self, req: &LlmRequest) -> Result<LlmExchange, LlmError> {
        if req.messages.is_empty() {
            return Err(LlmError::Config("request has no messages".into()));
        }
        let fingerprint = req.fingerprint();
        match &self.backend {
            Backend::Replay(index) => {
                let ex = index.lookup(&fingerprint, &req.tag)?;
                tracing::debug!(tag = %req.tag, %fingerprint, "replayed");
                Ok(ex.clone())
            }
            Backend::Live(p) => self.call(p.as_ref(), req, fingerprint).await,
            Backend::Record(p, writer) => {
                let ex = self.call(p.as_ref(), req, fingerprint).await?;
                writer.append(&ex)?;
                Ok(ex)
            }
        }
    }

    async fn call(
        &self,
        p: &dyn Provider,
        req: &LlmRequest,
        fingerprint: String,
    ) -> Result<LlmExchange, LlmError> {
        let started = Instant::now();
        let mut result = self.attempt(p, req).await;
        if let Err(e) = &result {
            if e.is_transient() {
                let base = self.retry_delay.as_millis() as u64;
                let wait = rand::rng().random_range(base / 2..=base + base / 2);
                tracing::warn!(tag = %req.tag, error = %e, wait_ms = wait, "retrying once");
                tokio::time::sleep(Duration::from_millis(wait)).await;
                result = self.attempt(p, req).await;
            }
        }
        Ok(LlmExchange {
            fingerprint,
            request: req.clone(),
            response_text: result?,
            latency: started.elapsed(),
        })
    }

    async fn attempt(&self, p: &dyn Provider, req: &LlmRequest) -> Result<String, LlmError> {
        tokio::time::timeout(self.timeout, p.complete(req))
            .await
            .map_err(|_| LlmError::Timeout(self.timeout))?
    }
}

/// Gateway settings, normally read from the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct GatewaySettings {
    pub mode: GatewayMode,
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub cassette: Option<PathBuf>,
    pub timeout: Duration,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        Self {
            mode: GatewayMode::Replay,
            base_url: DEFAULT_BASE_URL.into(),
            api_key: None,
            model: DEFAULT_MODEL.into(),
            cassette: None,
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

impl GatewaySettings {
    /// Reads `SIMWEAVE_LLM_MODE`, `SIMWEAVE_LLM_BASE_URL`,
    /// `SIMWEAVE_LLM_API_KEY` (or `ANTHROPIC_API_KEY`), `SIMWEAVE_LLM_MODEL`,
    /// `SIMWEAVE_CASSETTE` and `SIMWEAVE_LLM_TIMEOUT_SECS`.
    pub fn from_env() -> Result<Self, LlmError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, LlmError> {
        let mut s = Self::default();
        if let Some(mode) = get("SIMWEAVE_LLM_MODE") {
            s.mode = mode.parse()?;
        }
        if let Some(url) = get("SIMWEAVE_LLM_BASE_URL") {
            s.base_url = url;
        }
        s.api_key = get("SIMWEAVE_LLM_API_KEY").or_else(|| get("ANTHROPIC_API_KEY"));
        if let Some(model) = get("SIMWEAVE_LLM_MODEL") {
            s.model = model;
        }
        s.cassette = get("SIMWEAVE_CASSETTE").map(PathBuf::from);
        if let Some(secs) = get("SIMWEAVE_LLM_TIMEOUT_SECS") {
            let secs: u64 = secs
                .parse()
                .map_err(|_| LlmError::Config(format!("bad timeout `{secs}`")))?;
            s.timeout = Duration::from_secs(secs);
        }
        Ok(s)
    }

    pub fn build(&self) -> Result<Gateway, LlmError> {
        let cassette = || {
            self.cassette.as_deref().ok_or_else(|| {
                LlmError::Config("SIMWEAVE_CASSETTE is required in this mode".into())
            })
        };
        let provider = || -> Result<Arc<dyn Provider>, LlmError> {
            let key = self
                .api_key
                .clone()
                .ok_or_else(|| LlmError::Config("an API key is required for live calls".into()))?;
            Ok(Arc::new(AnthropicProvider::new(
                &self.base_url,
                key,
                &self.model,
            )))
        };
        let gw = match self.mode {
            GatewayMode::Replay => Gateway::replay_file(cassette()?)?,
            GatewayMode::Live => Gateway::live(provider()?),
            GatewayMode::Record => Gateway::record(provider()?, cassette()?)?,
        };
        Ok(gw.with_timeout(self.timeout))
    }
}
