use async_trait::async_trait;
use thiserror::Error;

use super::logline::LogLine;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DriverError {
    #[error("element `{0}` not found")]
    ElementNotFound(String),
    #[error("browser crashed: {0}")]
    Crash(String),
    #[error("driver protocol error: {0}")]
    Protocol(String),
    #[error("no document loaded")]
    NotLoaded,
}

/// The browser operations the harness needs. Element ids are DOM ids.
#[async_trait]
pub trait BrowserDriver: Send {
    /// Replaces the page with `html`. Console errors and debug logs are
    /// reset. The debug flag set earlier stays in force.
    async fn load(&mut self, html: &str) -> Result<(), DriverError>;
    async fn click(&mut self, element_id: &str) -> Result<(), DriverError>;
    async fn set_value(&mut self, element_id: &str, value: &str) -> Result<(), DriverError>;
    async fn toggle(&mut self, element_id: &str) -> Result<(), DriverError>;
    /// Form value for inputs, text content otherwise.
    async fn read_content(&mut self, element_id: &str) -> Result<String, DriverError>;
    /// PNG bytes of the current viewport.
    async fn screenshot(&mut self) -> Result<Vec<u8>, DriverError>;
    /// Every uncaught error and `console.error` since the last load.
    async fn console_errors(&mut self) -> Result<Vec<String>, DriverError>;
    /// Forces `window.LOG_DEBUG` inside the loaded instance only; takes
    /// effect immediately and for later loads.
    async fn set_debug_flag(&mut self, on: bool) -> Result<(), DriverError>;
    /// Parsed `DEBUG [...]:` console lines since the last load.
    async fn debug_logs(&mut self) -> Result<Vec<LogLine>, DriverError>;
    /// Clicks every `<button>` and `[role=button]` element; returns how many.
    async fn click_buttons(&mut self) -> Result<usize, DriverError>;
}

/// Hands out one driver per run.
#[async_trait]
pub trait DriverFactory: Send + Sync {
    async fn open(&self) -> Result<Box<dyn BrowserDriver>, DriverError>;
}
