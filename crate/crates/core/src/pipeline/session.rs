use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::journal::JournalEvent;
use crate::graph::Graph;
use crate::harness::{TestCase, TestRun, TestRunRecord};
use crate::prompts::{BoundingBox, GoalCategory, OptionItem};
use crate::resolution::{AssumptionSheet, PopulatedSuggestion};
use crate::warning::Warning;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageId {
    Concept,
    Scenario,
    LearningGoal,
    UiGraph,
    Code,
}

impl StageId {
    pub const ALL: [StageId; 5] = [
        StageId::Concept,
        StageId::Scenario,
        StageId::LearningGoal,
        StageId::UiGraph,
        StageId::Code,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageId::Concept => "concept",
            StageId::Scenario => "scenario",
            StageId::LearningGoal => "learning-goal",
            StageId::UiGraph => "ui-graph",
            StageId::Code => "code",
        }
    }

    pub fn is_graph(self) -> bool {
        self != StageId::Code
    }

    fn index(self) -> usize {
        self as usize
    }

    pub fn earlier(self) -> &'static [StageId] {
        &Self::ALL[..self.index()]
    }

    pub fn later(self) -> &'static [StageId] {
        &Self::ALL[self.index() + 1..]
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for StageId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        StageId::ALL
            .into_iter()
            .find(|st| st.as_str() == norm || st.as_str().replace('-', "") == norm)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum StageStatus {
    Empty,
    Draft,
    Committed,
    Stale,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum StageContent {
    Graph(Graph),
    Document(String),
}

impl StageContent {
    pub fn graph(&self) -> Option<&Graph> {
        match self {
            StageContent::Graph(g) => Some(g),
            StageContent::Document(_) => None,
        }
    }

    pub fn document(&self) -> Option<&str> {
        match self {
            StageContent::Document(d) => Some(d),
            StageContent::Graph(_) => None,
        }
    }

    /// Graph-format text or the document itself.
    pub fn text(&self) -> String {
        match self {
            StageContent::Graph(g) => g.serialize(),
            StageContent::Document(d) => d.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageSlot {
    pub status: StageStatus,
    pub content: Option<StageContent>,
    /// Content at the last commit, restored by discard.
    pub last_committed: Option<StageContent>,
    /// Journal sequence numbers of the events that produced the content.
    pub provenance: Vec<u64>,
    /// Problems found when the content was produced.
    pub issues: Vec<Warning>,
}

impl StageSlot {
    fn empty() -> Self {
        Self {
            status: StageStatus::Empty,
            content: None,
            last_committed: None,
            provenance: Vec::new(),
            issues: Vec::new(),
        }
    }

    /// Draft or committed content, i.e. something an operation may build on.
    pub fn live(&self) -> Option<&StageContent> {
        match self.status {
            StageStatus::Draft | StageStatus::Committed => self.content.as_ref(),
            _ => None,
        }
    }
}

/// A scenario picked from the generated list, or typed by the author.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ScenarioChoice {
    Option(OptionItem),
    FreeText(String),
}

impl ScenarioChoice {
    pub fn prompt_text(&self) -> String {
        match self {
            ScenarioChoice::Option(o) if o.description.is_empty() => o.title.clone(),
            ScenarioChoice::Option(o) => format!("{}: {}", o.title, o.description),
            ScenarioChoice::FreeText(t) => t.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProcedureDerivation {
    pub category: GoalCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub independent_var: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dependent_var: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanatory_process: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experimental_object: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub underlying_process: Option<String>,
    pub procedure_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Annotation {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SuggestionStatus {
    Pending,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SuggestionEntry {
    pub index: usize,
    pub complaint: String,
    #[serde(flatten)]
    pub populated: PopulatedSuggestion,
    pub status: SuggestionStatus,
}

/// The latest automated test cycle, kept for guided testing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestReport {
    pub cycles: usize,
    pub fix_iterations: usize,
    pub cases: Vec<TestCase>,
    pub run: TestRun,
    /// UI cases awaiting a human verdict, in the order they were listed.
    pub guided: Vec<TestCase>,
    /// Latest play of each guided case, keyed by its position in `guided`.
    #[serde(default)]
    pub played: BTreeMap<usize, TestRunRecord>,
    pub document_changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShareRef {
    pub simulation_id: String,
    pub document_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Session {
    pub id: String,
    pub learning_content: Option<String>,
    pub stages: BTreeMap<StageId, StageSlot>,
    pub scenario_options: Vec<OptionItem>,
    pub scenario_choice: Option<ScenarioChoice>,
    pub goal_options: Vec<OptionItem>,
    pub goal_choice: Option<OptionItem>,
    pub procedure: Option<ProcedureDerivation>,
    pub suggestions: Vec<SuggestionEntry>,
    pub annotations: Vec<Annotation>,
    /// Last UI-graph part picked out by annotations.
    pub selection: Option<Graph>,
    pub assumptions: Option<AssumptionSheet>,
    pub tests: Option<TestReport>,
    pub shares: Vec<ShareRef>,
    pub journal: Vec<JournalEvent>,
}

impl Session {
    pub(crate) fn blank(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            learning_content: None,
            stages: StageId::ALL
                .into_iter()
                .map(|s| (s, StageSlot::empty()))
                .collect(),
            scenario_options: Vec::new(),
            scenario_choice: None,
            goal_options: Vec::new(),
            goal_choice: None,
            procedure: None,
            suggestions: Vec::new(),
            annotations: Vec::new(),
            selection: None,
            assumptions: None,
            tests: None,
            shares: Vec::new(),
            journal: Vec::new(),
        }
    }

    pub fn slot(&self, stage: StageId) -> &StageSlot {
        &self.stages[&stage]
    }

    pub(crate) fn slot_mut(&mut self, stage: StageId) -> &mut StageSlot {
        self.stages.get_mut(&stage).expect("all stages present")
    }

    pub fn status(&self, stage: StageId) -> StageStatus {
        self.slot(stage).status
    }

    pub fn statuses(&self) -> BTreeMap<StageId, StageStatus> {
        self.stages.iter().map(|(k, v)| (*k, v.status)).collect()
    }

    /// Draft or committed graph of a graph stage.
    pub fn graph(&self, stage: StageId) -> Option<&Graph> {
        self.slot(stage).live().and_then(StageContent::graph)
    }

    /// Draft or committed simulation document.
    pub fn document(&self) -> Option<&str> {
        self.slot(StageId::Code)
            .live()
            .and_then(StageContent::document)
    }

    pub fn committed_graph(&self, stage: StageId) -> Option<&Graph> {
        let slot = self.slot(stage);
        match slot.status {
            StageStatus::Committed => slot.content.as_ref().and_then(StageContent::graph),
            _ => None,
        }
    }

    /// First stage that is not committed, i.e. where the author works next.
    pub fn current_stage(&self) -> StageId {
        StageId::ALL
            .into_iter()
            .find(|s| self.status(*s) != StageStatus::Committed)
            .unwrap_or(StageId::Code)
    }

    /// Checks the stage-order rules: committed stages form a prefix and a
    /// draft sits right after that prefix. The code draft may also sit on
    /// a UI-graph draft, since suggestions change both at once.
    pub fn check_stage_order(&self) -> Result<(), String> {
        let statuses: Vec<StageStatus> = StageId::ALL.iter().map(|s| self.status(*s)).collect();
        let prefix = statuses
            .iter()
            .take_while(|s| **s == StageStatus::Committed)
            .count();
        for (i, st) in statuses.iter().enumerate().skip(prefix) {
            match st {
                StageStatus::Committed => {
                    return Err(format!(
                        "{} is committed after an uncommitted stage",
                        StageId::ALL[i]
                    ))
                }
                StageStatus::Draft if i == prefix => {}
                StageStatus::Draft
                    if i == 4 && prefix == 3 && statuses[3] == StageStatus::Draft => {}
                StageStatus::Draft => {
                    return Err(format!(
                        "{} is a draft before its inputs are committed",
                        StageId::ALL[i]
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// The session with journal timestamps blanked, for comparing a live
    /// session against one rebuilt from its journal.
    pub fn without_timestamps(&self) -> Session {
        let mut s = self.clone();
        for e in &mut s.journal {
            e.at = String::new();
        }
        s
    }
}
