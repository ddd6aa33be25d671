use serde::{Deserialize, Serialize};

use super::journal::Op;
use super::session::StageId;
use crate::graph::WidgetAction;
use crate::harness::Png;
use crate::prompts::{BoundingBox, OptionItem, WidgetSuggestion};
use crate::resolution::Complaint;

/// How a scenario is picked: by position in the generated list, as an
/// option object, or as the author's own text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ScenarioPick {
    Index(usize),
    Option(OptionItem),
    FreeText(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum GoalPick {
    Index(usize),
    /// Must carry a goal category.
    Option(OptionItem),
}

/// Every state-changing request a session accepts. Commands are journaled
/// verbatim so that a session can be rebuilt from its journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    rename_all = "camelCase",
    tag = "command",
    rename_all_fields = "camelCase"
)]
pub enum Command {
    SubmitContent {
        text: String,
    },
    Refine {
        stage: StageId,
        action: WidgetAction,
    },
    Commit {
        stage: StageId,
    },
    Discard {
        stage: StageId,
    },
    ListScenarios,
    SelectScenario {
        choice: ScenarioPick,
    },
    ListGoals,
    SelectGoal {
        choice: GoalPick,
    },
    DeriveProcedure,
    GenerateUiGraph,
    GenerateCode,
    /// Procedure, UI graph and code in one go.
    Generate,
    Chat {
        complaint: Complaint,
        /// Skips classification, as when the author picks a widget type.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        type_code: Option<u8>,
    },
    /// A suggestion the author filled in by hand.
    Propose {
        suggestion: WidgetSuggestion,
    },
    Accept {
        index: usize,
        /// The suggestion as edited before accepting.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        edited: Option<WidgetSuggestion>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        screenshot: Option<Png>,
    },
    Reject {
        index: usize,
    },
    GetAssumptions,
    ApplyAssumptions {
        node: String,
        assumptions: Vec<String>,
    },
    Annotate {
        #[serde(rename = "box")]
        bbox: BoundingBox,
    },
    SelectSubgraph {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        screenshot: Option<Png>,
    },
    Redraw {
        sketch: Png,
        #[serde(rename = "box")]
        bbox: BoundingBox,
    },
    RunTests,
    Play {
        case: usize,
    },
    Verdict {
        case: usize,
        pass: bool,
        #[serde(default)]
        note: String,
    },
    Share {
        simulation_id: String,
    },
}

impl Command {
    pub fn op(&self) -> Op {
        match self {
            Command::Refine { .. } | Command::ApplyAssumptions { .. } | Command::Redraw { .. } => {
                Op::Refine
            }
            Command::Commit { .. }
            | Command::Discard { .. }
            | Command::Accept { .. }
            | Command::Reject { .. }
            | Command::RunTests
            | Command::Verdict { .. } => Op::Validate,
            Command::ListScenarios
            | Command::ListGoals
            | Command::GetAssumptions
            | Command::SelectSubgraph { .. }
            | Command::Play { .. } => Op::Inspect,
            Command::SubmitContent { .. }
            | Command::SelectScenario { .. }
            | Command::SelectGoal { .. }
            | Command::DeriveProcedure
            | Command::GenerateUiGraph
            | Command::GenerateCode
            | Command::Generate
            | Command::Chat { .. }
            | Command::Propose { .. }
            | Command::Annotate { .. }
            | Command::Share { .. } => Op::Direct,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::SubmitContent { .. } => "submitContent",
            Command::Refine { .. } => "refine",
            Command::Commit { .. } => "commit",
            Command::Discard { .. } => "discard",
            Command::ListScenarios => "listScenarios",
            Command::SelectScenario { .. } => "selectScenario",
            Command::ListGoals => "listGoals",
            Command::SelectGoal { .. } => "selectGoal",
            Command::DeriveProcedure => "deriveProcedure",
            Command::GenerateUiGraph => "generateUiGraph",
            Command::GenerateCode => "generateCode",
            Command::Generate => "generate",
            Command::Chat { .. } => "chat",
            Command::Propose { .. } => "propose",
            Command::Accept { .. } => "accept",
            Command::Reject { .. } => "reject",
            Command::GetAssumptions => "getAssumptions",
            Command::ApplyAssumptions { .. } => "applyAssumptions",
            Command::Annotate { .. } => "annotate",
            Command::SelectSubgraph { .. } => "selectSubgraph",
            Command::Redraw { .. } => "redraw",
            Command::RunTests => "runTests",
            Command::Play { .. } => "play",
            Command::Verdict { .. } => "verdict",
            Command::Share { .. } => "share",
        }
    }
}
