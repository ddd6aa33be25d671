//! The staged authoring session: learning content → concept graph →
//! scenario graph → learning-goal graph → UI graph → simulation document,
//! with human checkpoints between stages and a journal of every step.

mod command;
mod engine;
mod journal;
mod replay;
mod session;
pub mod validate;

pub use command::{Command, GoalPick, ScenarioPick};
pub use engine::{Engine, EngineError, ErrorClass, Executed, Outcome};
pub use journal::{parse_journal, Actor, EventKind, JournalEvent, Op, JOURNAL_SCHEMA};
pub use replay::{replay_journal, ReplayError};
pub use session::{
    Annotation, ProcedureDerivation, ScenarioChoice, Session, ShareRef, StageContent, StageId,
    StageSlot, StageStatus, SuggestionEntry, SuggestionStatus, TestReport,
};
