use std::fmt;

use serde::{Deserialize, Serialize};

/// Non-fatal findings attached to an operation's result and journaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum WarningCode {
    /// Model output was corrected to satisfy a structural rule.
    ModelRepair,
    CountMismatch,
    DroppedElements,
    NoControls,
    MissingInstrumentation,
    DebugFlagReset,
    MissingNodes,
    /// A human edit left a committed stage out of line with its parent.
    InvariantDrift,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub code: WarningCode,
    pub detail: String,
}

impl Warning {
    pub fn new(code: WarningCode, detail: impl Into<String>) -> Self {
        Self {
            code,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.code, self.detail)
    }
}
