use serde::{Deserialize, Serialize};

use super::command::Command;
use super::session::{StageId, StageStatus};
use crate::harness::FixIteration;
use crate::prompts::{sha256_hex, TemplateId};
use crate::warning::Warning;

/// Bumped when the event layout changes.
pub const JOURNAL_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Actor {
    Human,
    Model,
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    Inspect,
    Refine,
    Validate,
    Direct,
    Transform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    rename_all = "camelCase",
    tag = "type",
    rename_all_fields = "camelCase"
)]
pub enum EventKind {
    Created {
        session_id: String,
    },
    Command {
        command: Command,
    },
    /// One model-backed step: the template used and a digest of its output.
    Transform {
        template: TemplateId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stage: Option<StageId>,
        output_sha256: String,
    },
    Warning {
        warning: Warning,
    },
    FixIteration {
        cycle: usize,
        iteration: FixIteration,
    },
    /// Procedure answers gathered before a failed derivation step.
    PartialDerivation {
        answers: Vec<(String, String)>,
    },
    StageChanged {
        stage: StageId,
        from: StageStatus,
        to: StageStatus,
    },
    Failed {
        code: String,
        detail: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JournalEvent {
    pub schema: u32,
    pub seq: u64,
    /// RFC 3339 timestamp.
    pub at: String,
    pub actor: Actor,
    pub op: Op,
    pub kind: EventKind,
    /// SHA-256 of the JSON-encoded `kind`.
    pub digest: String,
}

impl JournalEvent {
    pub fn new(seq: u64, actor: Actor, op: Op, kind: EventKind) -> Self {
        let digest = sha256_hex(&serde_json::to_string(&kind).expect("events serialize"));
        Self {
            schema: JOURNAL_SCHEMA,
            seq,
            at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            actor,
            op,
            kind,
            digest,
        }
    }

    pub fn to_ndjson_line(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

/// Appends an event and returns its sequence number.
pub(crate) fn append(
    journal: &mut Vec<JournalEvent>,
    actor: Actor,
    op: Op,
    kind: EventKind,
) -> u64 {
    let seq = journal.last().map_or(0, |e| e.seq + 1);
    journal.push(JournalEvent::new(seq, actor, op, kind));
    seq
}

/// Parses a newline-delimited journal, skipping blank lines.
pub fn parse_journal(text: &str) -> Result<Vec<JournalEvent>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
