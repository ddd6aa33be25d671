use thiserror::Error;

use super::engine::Engine;
use super::journal::{EventKind, JournalEvent};
use super::session::Session;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("journal has no Created event")]
    NoCreatedEvent,
}

/// Rebuilds a session by re-running every journaled command, in order,
/// on a fresh session with the same id. Commands that failed originally
/// fail again and leave the same journal trail.
///
/// The result matches the original only when `engine` answers exactly as
/// the original one did, i.e. a replay gateway over the same cassette and
/// a deterministic driver.
pub async fn replay_journal(
    engine: &Engine,
    journal: &[JournalEvent],
) -> Result<Session, ReplayError> {
    let id = journal
        .iter()
        .find_map(|e| match &e.kind {
            EventKind::Created { session_id } => Some(session_id.clone()),
            _ => None,
        })
        .ok_or(ReplayError::NoCreatedEvent)?;
    let mut s = Engine::session_with_id(id);
    for event in journal {
        if let EventKind::Command { command } = &event.kind {
            // Failures are part of the record; the journal keeps them.
            let _ = engine.execute(&mut s, command.clone()).await;
        }
    }
    Ok(s)
}
