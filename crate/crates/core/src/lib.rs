pub mod graph;
pub mod harness;
pub mod llm;
pub mod pipeline;
pub mod prompts;
pub mod resolution;
mod warning;

pub use warning::{Warning, WarningCode};
