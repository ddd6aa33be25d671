use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use simweave::harness::{Behavior, CdpDriverFactory, DriverFactory, FakeDriverFactory};
use simweave::llm::{GatewaySettings, LlmError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("bad {var}: {detail}")]
    Invalid { var: &'static str, detail: String },
    #[error(transparent)]
    Gateway(#[from] LlmError),
}

/// Service settings. Read from `SIMWEAVE_LISTEN`, `SIMWEAVE_STORE`,
/// `SIMWEAVE_CDP_URL` and `SIMWEAVE_FAKE_BEHAVIOR`, plus the gateway
/// variables of [`GatewaySettings`].
#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub store: PathBuf,
    /// DevTools endpoint of a running browser. Without one the fake
    /// driver is used.
    pub cdp_url: Option<String>,
    pub fake_behavior: Option<PathBuf>,
    pub gateway: GatewaySettings,
}

impl ServerConfig {
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let listen = get("SIMWEAVE_LISTEN").unwrap_or_else(|| "127.0.0.1:8080".into());
        let listen =
            listen
                .parse()
                .map_err(|e: std::net::AddrParseError| ConfigError::Invalid {
                    var: "SIMWEAVE_LISTEN",
                    detail: format!("`{listen}`: {e}"),
                })?;
        Ok(Self {
            listen,
            store: get("SIMWEAVE_STORE")
                .unwrap_or_else(|| "simweave-data".into())
                .into(),
            cdp_url: get("SIMWEAVE_CDP_URL"),
            fake_behavior: get("SIMWEAVE_FAKE_BEHAVIOR").map(PathBuf::from),
            gateway: GatewaySettings::from_lookup(&get)?,
        })
    }

    pub fn drivers(&self) -> Result<Arc<dyn DriverFactory>, ConfigError> {
        if let Some(url) = &self.cdp_url {
            return Ok(Arc::new(CdpDriverFactory::new(url.clone())));
        }
        let behavior = match &self.fake_behavior {
            Some(path) => Behavior::load(path).map_err(|e| ConfigError::Invalid {
                var: "SIMWEAVE_FAKE_BEHAVIOR",
                detail: e.to_string(),
            })?,
            None => Behavior::default(),
        };
        Ok(Arc::new(FakeDriverFactory::new(behavior)))
    }
}
