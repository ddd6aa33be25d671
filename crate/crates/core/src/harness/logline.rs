use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// One `DEBUG [<timestamp>]: <message>` console line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogLine {
    pub timestamp: String,
    pub message: String,
}

static LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^DEBUG \[(\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(?:\.\d{1,9})?Z)\]: (.*)$").unwrap()
});

impl LogLine {
    /// Parses a single console line. Anything that does not follow the
    /// grammar exactly is rejected.
    pub fn parse(line: &str) -> Option<Self> {
        let caps = LINE.captures(line)?;
        Some(Self {
            timestamp: caps[1].to_string(),
            message: caps[2].to_string(),
        })
    }

    pub fn render(&self) -> String {
        format!("DEBUG [{}]: {}", self.timestamp, self.message)
    }
}
