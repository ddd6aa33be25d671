//! Scripted stand-in for a browser. It never runs JavaScript: element
//! presence comes from `id="…"` attributes in the markup and every side
//! effect comes from a behavior script.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, LazyLock};

use async_trait::async_trait;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::driver::{BrowserDriver, DriverError, DriverFactory};
use super::logline::LogLine;
use super::picture::placeholder_frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FakeAction {
    Load,
    Click,
    SetValue,
    Toggle,
}

/// What happens when a matching action is performed. All conditions that
/// are present must hold; every matching rule applies, in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Rule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<FakeAction>,
    /// Debug log messages, emitted only while the debug flag is on.
    /// `{value}` is replaced by the value being set.
    #[serde(default)]
    pub logs: Vec<String>,
    #[serde(default)]
    pub errors: Vec<String>,
    /// Element id → text later returned by `read_content`.
    #[serde(default)]
    pub content: HashMap<String, String>,
    #[serde(default)]
    pub crash: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Behavior {
    #[serde(default)]
    pub rules: Vec<Rule>,
    /// Emulate the stock `logDebug` hooks (init, button clicks, input
    /// changes) for documents that define `logDebug`.
    #[serde(default = "yes")]
    pub instrumentation: bool,
}

fn yes() -> bool {
    true
}

impl Default for Behavior {
    fn default() -> Self {
        Self {
            rules: Vec::new(),
            instrumentation: true,
        }
    }
}

impl Behavior {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, DriverError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DriverError::Protocol(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
            .map_err(|e| DriverError::Protocol(format!("{}: {e}", path.display())))
    }

    pub fn with_rule(mut self, rule: Rule) -> Self {
        self.rules.push(rule);
        self
    }
}

static ID_ATTR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"\bid\s*=\s*["']([^"']+)["']"#).unwrap());
static BUTTON_TAG: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?is)<button\b[^>]*>|<[a-z][a-z0-9]*\b[^>]*\brole\s*=\s*["']button["'][^>]*>"#)
        .unwrap()
});
static VALUE_ATTR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"\bvalue\s*=\s*["']([^"']*)["']"#).unwrap());

#[derive(Default)]
pub struct FakeDriver {
    behavior: Arc<Behavior>,
    doc: Option<String>,
    debug: bool,
    logs: Vec<LogLine>,
    errors: Vec<String>,
    content: HashMap<String, String>,
    values: HashMap<String, String>,
    ticks: u64,
    frame: u64,
}

impl FakeDriver {
    pub fn new(behavior: Behavior) -> Self {
        Self::shared(Arc::new(behavior))
    }

    fn shared(behavior: Arc<Behavior>) -> Self {
        Self {
            behavior,
            ..Self::default()
        }
    }

    fn doc(&self) -> Result<&str, DriverError> {
        self.doc.as_deref().ok_or(DriverError::NotLoaded)
    }

    fn has_element(&self, id: &str) -> Result<bool, DriverError> {
        Ok(ID_ATTR.captures_iter(self.doc()?).any(|c| &c[1] == id))
    }

    fn require(&self, id: &str) -> Result<(), DriverError> {
        if self.has_element(id)? {
            Ok(())
        } else {
            Err(DriverError::ElementNotFound(id.to_string()))
        }
    }

    /// The opening tag carrying `id`, and the text right after it.
    fn element_markup(&self, id: &str) -> Option<(&str, &str)> {
        let doc = self.doc.as_deref()?;
        let m = ID_ATTR.captures_iter(doc).find(|c| &c[1] == id)?;
        let at = m.get(0)?.start();
        let open = doc[..at].rfind('<')?;
        let close = at + doc[at..].find('>')?;
        let rest = &doc[close + 1..];
        let text = &rest[..rest.find('<').unwrap_or(rest.len())];
        Some((&doc[open..=close], text))
    }

    fn log(&mut self, message: String) {
        if !self.debug {
            return;
        }
        let ms = self.ticks;
        self.ticks += 1;
        self.logs.push(LogLine {
            timestamp: format!(
                "2025-01-01T00:{:02}:{:02}.{:03}Z",
                ms / 60_000 % 60,
                ms / 1000 % 60,
                ms % 1000
            ),
            message,
        });
    }

    fn fire(
        &mut self,
        action: FakeAction,
        element: Option<&str>,
        value: Option<&str>,
    ) -> Result<(), DriverError> {
        let doc = self.doc()?.to_string();
        let instrumented = self.behavior.instrumentation && doc.contains("logDebug");
        if instrumented {
            match (action, element) {
                (FakeAction::Load, _) => self.log("Simulation initialized".into()),
                (FakeAction::Click, Some(id)) => self.log(format!("Button {id} clicked")),
                (FakeAction::SetValue, Some(id)) => {
                    self.log(format!("Input {id} changed to {}", value.unwrap_or("")))
                }
                _ => {}
            }
        }
        let behavior = Arc::clone(&self.behavior);
        for rule in &behavior.rules {
            let applies = rule.action.is_none_or(|a| a == action)
                && rule.element.as_deref().is_none_or(|e| Some(e) == element)
                && rule
                    .document_contains
                    .as_deref()
                    .is_none_or(|s| doc.contains(s));
            if !applies {
                continue;
            }
            if rule.crash {
                self.doc = None;
                return Err(DriverError::Crash(format!("scripted crash on {action:?}")));
            }
            let fill = |s: &str| s.replace("{value}", value.unwrap_or(""));
            for l in &rule.logs {
                self.log(fill(l));
            }
            self.errors.extend(rule.errors.iter().map(|e| fill(e)));
            for (id, text) in &rule.content {
                self.content.insert(id.clone(), fill(text));
            }
        }
        self.frame += 1;
        Ok(())
    }
}

#[async_trait]
impl BrowserDriver for FakeDriver {
    async fn load(&mut self, html: &str) -> Result<(), DriverError> {
        self.doc = Some(html.to_string());
        self.logs.clear();
        self.errors.clear();
        self.content.clear();
        self.values.clear();
        self.frame = 0;
        self.fire(FakeAction::Load, None, None)
    }

    async fn click(&mut self, element_id: &str) -> Result<(), DriverError> {
        self.require(element_id)?;
        self.fire(FakeAction::Click, Some(element_id), None)
    }

    async fn set_value(&mut self, element_id: &str, value: &str) -> Result<(), DriverError> {
        self.require(element_id)?;
        self.values
            .insert(element_id.to_string(), value.to_string());
        self.fire(FakeAction::SetValue, Some(element_id), Some(value))
    }

    async fn toggle(&mut self, element_id: &str) -> Result<(), DriverError> {
        self.require(element_id)?;
        let checked = match self.values.get(element_id) {
            Some(v) => v == "true",
            None => self
                .element_markup(element_id)
                .is_some_and(|(tag, _)| tag.contains("checked")),
        };
        self.values
            .insert(element_id.to_string(), (!checked).to_string());
        self.fire(FakeAction::Toggle, Some(element_id), None)
    }

    async fn read_content(&mut self, element_id: &str) -> Result<String, DriverError> {
        self.require(element_id)?;
        if let Some(text) = self
            .content
            .get(element_id)
            .or_else(|| self.values.get(element_id))
        {
            return Ok(text.clone());
        }
        let (tag, text) = self.element_markup(element_id).unwrap_or(("", ""));
        if tag.to_ascii_lowercase().starts_with("<input") {
            let v = VALUE_ATTR.captures(tag).map(|c| c[1].to_string());
            return Ok(v.unwrap_or_default());
        }
        Ok(text.trim().to_string())
    }

    async fn screenshot(&mut self) -> Result<Vec<u8>, DriverError> {
        let doc = self.doc()?;
        let mut state = doc.as_bytes().to_vec();
        let mut keys: Vec<_> = self.content.iter().chain(self.values.iter()).collect();
        keys.sort();
        for (k, v) in keys {
            state.extend_from_slice(k.as_bytes());
            state.extend_from_slice(v.as_bytes());
        }
        state.extend_from_slice(&self.frame.to_le_bytes());
        Ok(placeholder_frame(&state, 160, 100))
    }

    async fn console_errors(&mut self) -> Result<Vec<String>, DriverError> {
        self.doc()?;
        Ok(self.errors.clone())
    }

    async fn set_debug_flag(&mut self, on: bool) -> Result<(), DriverError> {
        self.debug = on;
        Ok(())
    }

    async fn debug_logs(&mut self) -> Result<Vec<LogLine>, DriverError> {
        self.doc()?;
        Ok(self.logs.clone())
    }

    async fn click_buttons(&mut self) -> Result<usize, DriverError> {
        let doc = self.doc()?.to_string();
        let tags: Vec<Option<String>> = BUTTON_TAG
            .find_iter(&doc)
            .map(|m| ID_ATTR.captures(m.as_str()).map(|c| c[1].to_string()))
            .collect();
        for id in &tags {
            self.fire(FakeAction::Click, id.as_deref(), None)?;
        }
        Ok(tags.len())
    }
}

/// Opens [`FakeDriver`]s sharing one behavior script.
#[derive(Clone, Default)]
pub struct FakeDriverFactory {
    behavior: Arc<Behavior>,
}

impl FakeDriverFactory {
    pub fn new(behavior: Behavior) -> Self {
        Self {
            behavior: Arc::new(behavior),
        }
    }
}

#[async_trait]
impl DriverFactory for FakeDriverFactory {
    async fn open(&self) -> Result<Box<dyn BrowserDriver>, DriverError> {
        Ok(Box::new(FakeDriver::shared(Arc::clone(&self.behavior))))
    }
}
