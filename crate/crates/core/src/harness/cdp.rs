//! Driver for a Chromium-family browser over the remote-debugging
//! protocol (`--remote-debugging-port`). Each driver owns one tab.

use std::time::Duration;

use async_trait::async_trait;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use super::driver::{BrowserDriver, DriverError, DriverFactory};
use super::logline::LogLine;

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

const CALL_TIMEOUT: Duration = Duration::from_secs(30);

pub struct CdpDriver {
    ws: Ws,
    endpoint: String,
    target_id: String,
    next_id: u64,
    debug: bool,
    flag_script: Option<String>,
    logs: Vec<LogLine>,
    errors: Vec<String>,
    loaded: bool,
    page_loaded: bool,
}

fn protocol(e: impl std::fmt::Display) -> DriverError {
    DriverError::Protocol(e.to_string())
}

fn flag_source(on: bool) -> String {
    format!(
        "Object.defineProperty(window, 'LOG_DEBUG', {{ get() {{ return {on}; }}, set(_) {{}}, configurable: true }});"
    )
}

impl CdpDriver {
    /// Opens a new tab on the browser listening at `endpoint`
    /// (for example `http://127.0.0.1:9222`).
    pub async fn connect(endpoint: &str) -> Result<Self, DriverError> {
        let endpoint = endpoint.trim_end_matches('/').to_string();
        let target: Value = reqwest::Client::new()
            .put(format!("{endpoint}/json/new?about:blank"))
            .send()
            .await
            .map_err(protocol)?
            .json()
            .await
            .map_err(protocol)?;
        let ws_url = target["webSocketDebuggerUrl"]
            .as_str()
            .ok_or_else(|| protocol("target has no webSocketDebuggerUrl"))?;
        let (ws, _) = connect_async(ws_url).await.map_err(protocol)?;
        let mut driver = Self {
            ws,
            endpoint,
            target_id: target["id"].as_str().unwrap_or_default().to_string(),
            next_id: 0,
            debug: false,
            flag_script: None,
            logs: Vec::new(),
            errors: Vec::new(),
            loaded: false,
            page_loaded: false,
        };
        driver.call("Page.enable", json!({})).await?;
        driver.call("Runtime.enable", json!({})).await?;
        Ok(driver)
    }

    fn on_event(&mut self, method: &str, params: &Value) -> Result<(), DriverError> {
        match method {
            "Runtime.consoleAPICalled" => {
                let text = params["args"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .map(|a| match &a["value"] {
                        Value::String(s) => s.clone(),
                        Value::Null => a["description"].as_str().unwrap_or_default().to_string(),
                        v => v.to_string(),
                    })
                    .collect::<Vec<_>>()
                    .join(" ");
                if params["type"] == "error" {
                    self.errors.push(text);
                } else if let Some(line) = LogLine::parse(&text) {
                    self.logs.push(line);
                }
            }
            "Runtime.exceptionThrown" => {
                let d = &params["exceptionDetails"];
                let text = d["exception"]["description"]
                    .as_str()
                    .or_else(|| d["text"].as_str())
                    .unwrap_or("uncaught exception");
                self.errors.push(text.to_string());
            }
            "Page.loadEventFired" => self.page_loaded = true,
            "Inspector.targetCrashed" => return Err(DriverError::Crash("target crashed".into())),
            _ => {}
        }
        Ok(())
    }

    async fn next_message(&mut self) -> Result<Value, DriverError> {
        loop {
            let msg = tokio::time::timeout(CALL_TIMEOUT, self.ws.next())
                .await
                .map_err(|_| protocol("timed out waiting for the browser"))?
                .ok_or_else(|| DriverError::Crash("connection closed".into()))?
                .map_err(|e| DriverError::Crash(e.to_string()))?;
            if let Message::Text(text) = msg {
                return serde_json::from_str(text.as_str()).map_err(protocol);
            }
        }
    }

    async fn call(&mut self, method: &str, params: Value) -> Result<Value, DriverError> {
        self.next_id += 1;
        let id = self.next_id;
        let req = json!({"id": id, "method": method, "params": params});
        self.ws
            .send(Message::text(req.to_string()))
            .await
            .map_err(|e| DriverError::Crash(e.to_string()))?;
        loop {
            let v = self.next_message().await?;
            if v["id"].as_u64() == Some(id) {
                if let Some(err) = v.get("error") {
                    return Err(protocol(format!("{method}: {err}")));
                }
                return Ok(v["result"].clone());
            }
            if let Some(m) = v["method"].as_str() {
                self.on_event(m, &v["params"])?;
            }
        }
    }

    async fn evaluate(&mut self, expr: &str) -> Result<Value, DriverError> {
        let r = self
            .call(
                "Runtime.evaluate",
                json!({"expression": expr, "returnByValue": true, "awaitPromise": true}),
            )
            .await?;
        if let Some(ex) = r.get("exceptionDetails") {
            return Err(protocol(format!("evaluation failed: {ex}")));
        }
        Ok(r["result"]["value"].clone())
    }

    /// Runs `body` with `el` bound to the element, or reports it missing.
    async fn with_element(&mut self, id: &str, body: &str) -> Result<Value, DriverError> {
        if !self.loaded {
            return Err(DriverError::NotLoaded);
        }
        let expr = format!(
            "(() => {{ const el = document.getElementById({}); if (!el) return {{ missing: true }}; {body} }})()",
            serde_json::to_string(id).expect("string")
        );
        let v = self.evaluate(&expr).await?;
        if v["missing"] == true {
            return Err(DriverError::ElementNotFound(id.to_string()));
        }
        Ok(v)
    }

    /// Round-trips a no-op so that queued console events are processed.
    async fn flush(&mut self) -> Result<(), DriverError> {
        self.evaluate("0").await.map(|_| ())
    }
}

#[async_trait]
impl BrowserDriver for CdpDriver {
    async fn load(&mut self, html: &str) -> Result<(), DriverError> {
        self.logs.clear();
        self.errors.clear();
        self.page_loaded = false;
        let url = format!("data:text/html;base64,{}", B64.encode(html));
        self.call("Page.navigate", json!({"url": url})).await?;
        while !self.page_loaded {
            let v = self.next_message().await?;
            if let Some(m) = v["method"].as_str() {
                self.on_event(m, &v["params"])?;
            }
        }
        self.loaded = true;
        self.flush().await
    }

    async fn click(&mut self, element_id: &str) -> Result<(), DriverError> {
        self.with_element(element_id, "el.click(); return true;")
            .await
            .map(|_| ())
    }

    async fn set_value(&mut self, element_id: &str, value: &str) -> Result<(), DriverError> {
        let body = format!(
            "el.value = {}; el.dispatchEvent(new Event('input', {{bubbles: true}})); el.dispatchEvent(new Event('change', {{bubbles: true}})); return true;",
            serde_json::to_string(value).expect("string")
        );
        self.with_element(element_id, &body).await.map(|_| ())
    }

    async fn toggle(&mut self, element_id: &str) -> Result<(), DriverError> {
        self.with_element(element_id, "el.click(); return true;")
            .await
            .map(|_| ())
    }

    async fn read_content(&mut self, element_id: &str) -> Result<String, DriverError> {
        let v = self
            .with_element(
                element_id,
                "return { text: ('value' in el && el.tagName !== 'BUTTON') ? String(el.value) : el.textContent.trim() };",
            )
            .await?;
        Ok(v["text"].as_str().unwrap_or_default().to_string())
    }

    async fn screenshot(&mut self) -> Result<Vec<u8>, DriverError> {
        if !self.loaded {
            return Err(DriverError::NotLoaded);
        }
        let r = self
            .call("Page.captureScreenshot", json!({"format": "png"}))
            .await?;
        B64.decode(r["data"].as_str().unwrap_or_default())
            .map_err(protocol)
    }

    async fn console_errors(&mut self) -> Result<Vec<String>, DriverError> {
        if !self.loaded {
            return Err(DriverError::NotLoaded);
        }
        self.flush().await?;
        Ok(self.errors.clone())
    }

    async fn set_debug_flag(&mut self, on: bool) -> Result<(), DriverError> {
        if let Some(old) = self.flag_script.take() {
            self.call(
                "Page.removeScriptToEvaluateOnNewDocument",
                json!({"identifier": old}),
            )
            .await?;
        }
        let r = self
            .call(
                "Page.addScriptToEvaluateOnNewDocument",
                json!({"source": flag_source(on)}),
            )
            .await?;
        self.flag_script = r["identifier"].as_str().map(str::to_string);
        self.debug = on;
        if self.loaded {
            self.evaluate(&flag_source(on)).await?;
        }
        Ok(())
    }

    async fn debug_logs(&mut self) -> Result<Vec<LogLine>, DriverError> {
        if !self.loaded {
            return Err(DriverError::NotLoaded);
        }
        self.flush().await?;
        Ok(self.logs.clone())
    }

    async fn click_buttons(&mut self) -> Result<usize, DriverError> {
        if !self.loaded {
            return Err(DriverError::NotLoaded);
        }
        let v = self
            .evaluate(
                "(() => { const els = Array.from(document.querySelectorAll('button, [role=button]')); \
                 els.forEach(el => { try { el.click(); } catch (e) { console.error(String(e)); } }); return els.length; })()",
            )
            .await?;
        Ok(v.as_u64().unwrap_or(0) as usize)
    }
}

impl Drop for CdpDriver {
    fn drop(&mut self) {
        let url = format!("{}/json/close/{}", self.endpoint, self.target_id);
        if let Ok(handle) = tokio::runtime::Handle::try_current() {
            handle.spawn(async move {
                let _ = reqwest::Client::new().get(url).send().await;
            });
        }
    }
}

/// Opens one tab per run on a shared browser.
#[derive(Debug, Clone)]
pub struct CdpDriverFactory {
    endpoint: String,
}

impl CdpDriverFactory {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
        }
    }
}

#[async_trait]
impl DriverFactory for CdpDriverFactory {
    async fn open(&self) -> Result<Box<dyn BrowserDriver>, DriverError> {
        Ok(Box::new(CdpDriver::connect(&self.endpoint).await?))
    }
}
