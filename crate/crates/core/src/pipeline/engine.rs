use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::command::{Command, GoalPick, ScenarioPick};
use super::journal::{append, Actor, EventKind, Op};
use super::session::*;
use super::validate;
use crate::graph::{apply_widget, mint_node_id, parse_graph, Graph, GraphError};
use crate::harness::picture::{annotate, Mark};
use crate::harness::{
    DriverError, DriverFactory, Harness, HarnessError, Png, TestRunRecord, DEFAULT_SETTLE,
};
use crate::llm::{Gateway, LlmError, LlmRequest};
use crate::prompts::{
    extract_document, extract_graph, parse_options, sha256_hex, BoundingBox, ExtractError,
    GoalCategory, OptionItem, OptionKind, Registry, SuggestionPayload, TemplateError, TemplateId,
    WidgetSuggestion,
};
use crate::resolution::{
    check_referents, graph_action, resolve_node, Complaint, PopulatedSuggestion, ResolutionError,
    Resolver,
};
use crate::warning::Warning;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("stage order: {0}")]
    StageOrderViolation(String),
    #[error("{0} is not a draft")]
    NotADraft(StageId),
    #[error("{0}")]
    Precondition(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("scenario ids drifted: {0}")]
    IdDrift(String),
    #[error("nothing of the scenario graph is left in the learning-goal reply")]
    EmptyGoalGraph,
    #[error("suggestion no longer applies: {}", .0.join("; "))]
    InvalidSuggestion(Vec<String>),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Resolution(#[from] ResolutionError),
}

/// Coarse failure classes, one per HTTP status the service returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    NotFound,
    Conflict,
    Unprocessable,
    Unavailable,
    Internal,
}

fn variant_name<T: std::fmt::Debug>(v: &T) -> String {
    let dbg = format!("{v:?}");
    dbg.split(|c: char| !c.is_alphanumeric())
        .next()
        .unwrap_or_default()
        .to_string()
}

fn driver_class(e: &DriverError) -> ErrorClass {
    match e {
        DriverError::ElementNotFound(_) => ErrorClass::Unprocessable,
        _ => ErrorClass::Unavailable,
    }
}

impl EngineError {
    /// Stable machine-readable code, e.g. `NotADraft` or `SchemaMismatch`.
    pub fn code(&self) -> String {
        match self {
            EngineError::Graph(e) => variant_name(e),
            EngineError::Extract(e) => variant_name(e),
            EngineError::Template(e) => variant_name(e),
            EngineError::Llm(e) => variant_name(e),
            EngineError::Harness(HarnessError::Extract(e))
            | EngineError::Resolution(ResolutionError::Extract(e)) => variant_name(e),
            EngineError::Harness(HarnessError::Driver(e)) => variant_name(e),
            EngineError::Harness(e) => variant_name(e),
            EngineError::Resolution(ResolutionError::Graph(e)) => variant_name(e),
            EngineError::Resolution(e) => variant_name(e),
            other => variant_name(other),
        }
    }

    pub fn class(&self) -> ErrorClass {
        use ErrorClass::*;
        match self {
            EngineError::NotFound(_) => NotFound,
            EngineError::StageOrderViolation(_)
            | EngineError::NotADraft(_)
            | EngineError::Precondition(_) => Conflict,
            EngineError::IdDrift(_)
            | EngineError::EmptyGoalGraph
            | EngineError::InvalidSuggestion(_)
            | EngineError::Graph(_)
            | EngineError::Extract(_) => Unprocessable,
            EngineError::Template(_) => Internal,
            EngineError::Llm(_) => Unavailable,
            EngineError::Harness(e) => match e {
                HarnessError::Llm(_) => Unavailable,
                HarnessError::Driver(d) => driver_class(d),
                HarnessError::DriverCrash { .. } => Unavailable,
                HarnessError::Template(_) => Internal,
                _ => Unprocessable,
            },
            EngineError::Resolution(e) => match e {
                ResolutionError::Llm(_) => Unavailable,
                ResolutionError::Template(_) => Internal,
                _ => Unprocessable,
            },
        }
    }
}

/// What a command produced, besides the new session state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    rename_all = "camelCase",
    tag = "kind",
    rename_all_fields = "camelCase"
)]
pub enum Outcome {
    Stage {
        stage: StageId,
        status: StageStatus,
    },
    Options {
        items: Vec<OptionItem>,
    },
    Procedure {
        procedure: ProcedureDerivation,
    },
    Suggestion {
        entry: SuggestionEntry,
    },
    Assumptions {
        sheet: crate::resolution::AssumptionSheet,
    },
    Annotation {
        annotation: Annotation,
    },
    Subgraph {
        graph: Graph,
    },
    Tests {
        report: Box<TestReport>,
    },
    Played {
        record: Box<TestRunRecord>,
    },
    Verdict {
        case: usize,
        pass: bool,
    },
    Shared {
        share: ShareRef,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Executed {
    pub outcome: Outcome,
    pub warnings: Vec<Warning>,
    /// Sequence number of the last journal event the command appended.
    pub journal_ref: u64,
}

/// Executes commands against sessions. Holds no session state itself.
#[derive(Clone)]
pub struct Engine {
    registry: Arc<Registry>,
    gateway: Arc<Gateway>,
    drivers: Arc<dyn DriverFactory>,
    settle: Duration,
}

impl Engine {
    pub fn new(
        registry: Arc<Registry>,
        gateway: Arc<Gateway>,
        drivers: Arc<dyn DriverFactory>,
    ) -> Self {
        Self {
            registry,
            gateway,
            drivers,
            settle: DEFAULT_SETTLE,
        }
    }

    pub fn with_settle(mut self, settle: Duration) -> Self {
        self.settle = settle;
        self
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn create_session(&self) -> Session {
        Self::session_with_id(uuid::Uuid::new_v4().simple().to_string())
    }

    pub fn session_with_id(id: impl Into<String>) -> Session {
        let mut s = Session::blank(id);
        let session_id = s.id.clone();
        append(
            &mut s.journal,
            Actor::Human,
            Op::Direct,
            EventKind::Created { session_id },
        );
        s
    }

    /// Runs one command. On success `s` takes the new state; on failure
    /// only the journal grows (the command, anything journaled before the
    /// failure, and a `Failed` event). Dropping the future part-way
    /// leaves `s` untouched.
    pub async fn execute(&self, s: &mut Session, cmd: Command) -> Result<Executed, EngineError> {
        let before = s.statuses();
        let op = cmd.op();
        let mut run = Run {
            eng: self,
            s: s.clone(),
            cmd_seq: 0,
            transforms: Vec::new(),
            warnings: Vec::new(),
        };
        run.cmd_seq = run.journal(
            Actor::Human,
            op,
            EventKind::Command {
                command: cmd.clone(),
            },
        );
        tracing::debug!(session = %s.id, command = cmd.name(), "executing");
        match run.dispatch(cmd).await {
            Ok(outcome) => {
                for (stage, from) in before {
                    let to = run.s.status(stage);
                    if to != from {
                        run.journal(
                            Actor::System,
                            op,
                            EventKind::StageChanged { stage, from, to },
                        );
                    }
                }
                debug_assert!(
                    run.s.check_stage_order().is_ok(),
                    "{:?}",
                    run.s.check_stage_order()
                );
                let journal_ref = run.s.journal.last().map_or(0, |e| e.seq);
                let warnings = std::mem::take(&mut run.warnings);
                *s = run.s;
                Ok(Executed {
                    outcome,
                    warnings,
                    journal_ref,
                })
            }
            Err(e) => {
                let mut journal = std::mem::take(&mut run.s.journal);
                append(
                    &mut journal,
                    Actor::System,
                    op,
                    EventKind::Failed {
                        code: e.code(),
                        detail: e.to_string(),
                    },
                );
                s.journal = journal;
                Err(e)
            }
        }
    }

    fn harness(&self) -> Harness {
        Harness::new(
            self.registry.clone(),
            self.gateway.clone(),
            self.drivers.clone(),
        )
        .with_settle(self.settle)
    }

    fn resolver(&self) -> Resolver {
        Resolver::new(self.registry.clone(), self.gateway.clone())
    }

    /// Screenshot of `doc` with red boxes drawn on it.
    async fn capture(&self, doc: &str, marks: &[Mark]) -> Result<Png, EngineError> {
        let mut driver = self.drivers.open().await.map_err(HarnessError::from)?;
        driver.load(doc).await.map_err(HarnessError::from)?;
        let shot = driver.screenshot().await.map_err(HarnessError::from)?;
        if marks.is_empty() {
            return Ok(Png(shot));
        }
        annotate(&shot, marks)
            .map(Png)
            .ok_or_else(|| EngineError::Precondition("driver screenshot is not a PNG".into()))
    }
}

fn goal_text(o: &OptionItem) -> String {
    if o.description.is_empty() {
        o.title.clone()
    } else {
        format!("{}: {}", o.title, o.description)
    }
}

/// A short model answer as a prompt variable: trimmed, unquoted, no
/// trailing period.
fn clean_answer(reply: &str) -> String {
    let t = crate::prompts::strip_fences(reply);
    t.trim()
        .trim_matches(|c| c == '"' || c == '\'')
        .trim()
        .trim_end_matches('.')
        .trim()
        .to_string()
}

fn mark(bbox: &BoundingBox, label: Option<&str>) -> Mark {
    Mark {
        rect: [bbox.x, bbox.y, bbox.w, bbox.h],
        label: label.map(str::to_string),
    }
}

/// State of one command in flight, applied to a copy of the session.
struct Run<'e> {
    eng: &'e Engine,
    s: Session,
    cmd_seq: u64,
    transforms: Vec<u64>,
    warnings: Vec<Warning>,
}

impl Run<'_> {
    fn journal(&mut self, actor: Actor, op: Op, kind: EventKind) -> u64 {
        append(&mut self.s.journal, actor, op, kind)
    }

    fn warn_all(&mut self, warnings: impl IntoIterator<Item = Warning>) {
        for warning in warnings {
            tracing::info!(code = ?warning.code, detail = %warning.detail, "warning");
            self.journal(
                Actor::System,
                Op::Validate,
                EventKind::Warning {
                    warning: warning.clone(),
                },
            );
            self.warnings.push(warning);
        }
    }

    fn transformed(&mut self, template: TemplateId, stage: Option<StageId>, output: &str) {
        let seq = self.journal(
            Actor::Model,
            Op::Transform,
            EventKind::Transform {
                template,
                stage,
                output_sha256: sha256_hex(output),
            },
        );
        self.transforms.push(seq);
    }

    async fn ask(
        &mut self,
        id: TemplateId,
        vars: &[(&str, &str)],
        stage: Option<StageId>,
    ) -> Result<String, EngineError> {
        let text = self.eng.registry.render(id, vars)?;
        let reply = self
            .eng
            .gateway
            .complete(&LlmRequest::user(id.as_str(), text))
            .await?;
        self.transformed(id, stage, &reply);
        Ok(reply)
    }

    async fn ask_graph(
        &mut self,
        id: TemplateId,
        vars: &[(&str, &str)],
        stage: StageId,
    ) -> Result<Graph, EngineError> {
        let reply = self.ask(id, vars, Some(stage)).await?;
        Ok(parse_graph(&extract_graph(&reply)?)?)
    }

    /// Stores new draft content; later stages that had content go stale.
    fn set_draft(&mut self, stage: StageId, content: StageContent, issues: Vec<Warning>) {
        let mut provenance = vec![self.cmd_seq];
        provenance.extend(&self.transforms);
        let slot = self.s.slot_mut(stage);
        slot.status = StageStatus::Draft;
        slot.content = Some(content);
        slot.provenance = provenance;
        slot.issues = issues;
        self.mark_stale_after(stage);
    }

    fn mark_stale_after(&mut self, stage: StageId) {
        for later in stage.later() {
            let slot = self.s.slot_mut(*later);
            if slot.status != StageStatus::Empty {
                slot.status = StageStatus::Stale;
            }
        }
    }

    fn set_document(&mut self, doc: String, mut warnings: Vec<Warning>) {
        let (doc, checks) = validate::check_document(&doc);
        warnings.extend(checks);
        let issues = warnings
            .iter()
            .filter(|w| w.code == crate::warning::WarningCode::MissingInstrumentation)
            .cloned()
            .collect();
        self.warn_all(warnings);
        self.set_draft(StageId::Code, StageContent::Document(doc), issues);
    }

    fn require_committed(&self, stage: StageId, for_what: &str) -> Result<&Graph, EngineError> {
        self.s.committed_graph(stage).ok_or_else(|| {
            EngineError::StageOrderViolation(format!("{for_what} needs a committed {stage} stage"))
        })
    }

    fn live_graph(&self, stage: StageId, for_what: &str) -> Result<Graph, EngineError> {
        self.s.graph(stage).cloned().ok_or_else(|| {
            EngineError::StageOrderViolation(format!("{for_what} needs a {stage} draft or commit"))
        })
    }

    fn live_document(&self, for_what: &str) -> Result<String, EngineError> {
        self.s.document().map(str::to_string).ok_or_else(|| {
            EngineError::StageOrderViolation(format!("{for_what} needs a generated simulation"))
        })
    }

    fn hypothesis(&self) -> Result<String, EngineError> {
        self.s
            .goal_choice
            .as_ref()
            .map(goal_text)
            .ok_or_else(|| EngineError::Precondition("no learning goal selected".into()))
    }

    fn stage_outcome(&self, stage: StageId) -> Outcome {
        Outcome::Stage {
            stage,
            status: self.s.status(stage),
        }
    }

    async fn dispatch(&mut self, cmd: Command) -> Result<Outcome, EngineError> {
        match cmd {
            Command::SubmitContent { text } => self.submit(text).await,
            Command::Refine { stage, action } => {
                if !stage.is_graph() {
                    return Err(EngineError::Precondition(
                        "the code stage has no graph to edit".into(),
                    ));
                }
                let current = self.live_graph(stage, "editing")?;
                let next = apply_widget(&current, &action)?;
                self.set_draft(stage, StageContent::Graph(next), Vec::new());
                Ok(self.stage_outcome(stage))
            }
            Command::Commit { stage } => self.commit(stage),
            Command::Discard { stage } => self.discard(stage),
            Command::ListScenarios => {
                let concept = self
                    .require_committed(StageId::Concept, "listing scenarios")?
                    .serialize();
                let reply = self
                    .ask(TemplateId::ScenarioOptions, &[("graph", &concept)], None)
                    .await?;
                let items = parse_options(&reply, OptionKind::Scenario)?;
                self.warn_all(validate::count_warning(
                    "scenarios",
                    items.len(),
                    validate::EXPECTED_SCENARIOS,
                ));
                self.s.scenario_options = items.clone();
                Ok(Outcome::Options { items })
            }
            Command::SelectScenario { choice } => self.select_scenario(choice).await,
            Command::ListGoals => {
                let scenario = self
                    .require_committed(StageId::Scenario, "listing goals")?
                    .serialize();
                let reply = self
                    .ask(TemplateId::GoalOptions, &[("graph", &scenario)], None)
                    .await?;
                let items = parse_options(&reply, OptionKind::Goal)?;
                self.warn_all(validate::count_warning(
                    "learning goals",
                    items.len(),
                    validate::EXPECTED_GOALS,
                ));
                self.s.goal_options = items.clone();
                Ok(Outcome::Options { items })
            }
            Command::SelectGoal { choice } => self.select_goal(choice).await,
            Command::DeriveProcedure => {
                let procedure = self.derive().await?;
                Ok(Outcome::Procedure { procedure })
            }
            Command::GenerateUiGraph => {
                self.generate_ui().await?;
                Ok(self.stage_outcome(StageId::UiGraph))
            }
            Command::GenerateCode => {
                self.generate_code().await?;
                Ok(self.stage_outcome(StageId::Code))
            }
            Command::Generate => {
                self.derive().await?;
                self.generate_ui().await?;
                self.generate_code().await?;
                Ok(self.stage_outcome(StageId::Code))
            }
            Command::Chat {
                complaint,
                type_code,
            } => self.chat(complaint, type_code).await,
            Command::Propose { suggestion } => {
                let ui = self.live_graph(StageId::UiGraph, "a suggestion")?;
                let complaint = suggestion.message.clone();
                Ok(self.push_suggestion(complaint, suggestion, &ui))
            }
            Command::Accept {
                index,
                edited,
                screenshot,
            } => self.accept(index, edited, screenshot).await,
            Command::Reject { index } => {
                let entry = self.pending(index)?;
                entry.status = SuggestionStatus::Rejected;
                let entry = entry.clone();
                Ok(Outcome::Suggestion { entry })
            }
            Command::GetAssumptions => {
                let doc = self.live_document("reading assumptions")?;
                let ui = self.live_graph(StageId::UiGraph, "reading assumptions")?;
                let (sheet, warnings) = self.eng.resolver().get_assumptions(&doc, &ui).await?;
                self.transformed(
                    TemplateId::CodeAssumptions,
                    None,
                    &serde_json::to_string(&sheet).expect("sheet serializes"),
                );
                self.warn_all(warnings);
                self.s.assumptions = Some(sheet.clone());
                Ok(Outcome::Assumptions { sheet })
            }
            Command::ApplyAssumptions { node, assumptions } => {
                self.apply_assumptions(&node, assumptions).await?;
                Ok(self.stage_outcome(StageId::Code))
            }
            Command::Annotate { bbox } => {
                if !bbox.is_valid() {
                    return Err(ResolutionError::DegenerateBox.into());
                }
                let annotation = Annotation {
                    label: format!("A{}", self.s.annotations.len() + 1),
                    bbox,
                };
                self.s.annotations.push(annotation.clone());
                Ok(Outcome::Annotation { annotation })
            }
            Command::SelectSubgraph { screenshot } => {
                let doc = self.live_document("selecting a subgraph")?;
                let ui = self.live_graph(StageId::UiGraph, "selecting a subgraph")?;
                let shot = match screenshot {
                    Some(p) => p,
                    None => {
                        if self.s.annotations.is_empty() {
                            return Err(EngineError::Precondition(
                                "draw at least one annotation first".into(),
                            ));
                        }
                        let marks: Vec<Mark> = self
                            .s
                            .annotations
                            .iter()
                            .map(|a| mark(&a.bbox, Some(&a.label)))
                            .collect();
                        self.eng.capture(&doc, &marks).await?
                    }
                };
                let (graph, warnings) = self
                    .eng
                    .resolver()
                    .select_subgraph(&shot.0, &doc, &ui)
                    .await?;
                self.transformed(TemplateId::SubgraphSelection, None, &graph.serialize());
                self.warn_all(warnings);
                self.s.selection = Some(graph.clone());
                Ok(Outcome::Subgraph { graph })
            }
            Command::Redraw { sketch, bbox } => {
                if !bbox.is_valid() {
                    return Err(ResolutionError::DegenerateBox.into());
                }
                self.live_document("redrawing")?;
                let ui = self.live_graph(StageId::UiGraph, "redrawing")?;
                let svg = self.eng.resolver().sketch_to_svg(&sketch.0, &ui).await?;
                self.transformed(TemplateId::SketchToSvg, None, &svg);
                let suggestion = WidgetSuggestion {
                    message: "I want the visual inside the red box replaced with my sketch.".into(),
                    payload: SuggestionPayload::Redraw { bbox, svg },
                };
                let complaint = suggestion.message.clone();
                Ok(self.push_suggestion(complaint, suggestion, &ui))
            }
            Command::RunTests => self.run_tests().await,
            Command::Play { case } => {
                let doc = self.live_document("playing a test")?;
                let report = self
                    .s
                    .tests
                    .as_ref()
                    .ok_or_else(|| EngineError::Precondition("run the tests first".into()))?;
                let (run_index, tc) = report
                    .run
                    .guided
                    .get(case)
                    .cloned()
                    .ok_or_else(|| EngineError::NotFound(format!("guided test {case}")))?;
                let record = self
                    .eng
                    .harness()
                    .run_guided_case(&doc, run_index, &tc)
                    .await?;
                self.s
                    .tests
                    .as_mut()
                    .expect("checked")
                    .played
                    .insert(case, record.clone());
                Ok(Outcome::Played {
                    record: Box::new(record),
                })
            }
            Command::Verdict { case, pass, note } => self.verdict(case, pass, note).await,
            Command::Share { simulation_id } => {
                let doc = self.live_document("sharing")?;
                if self
                    .s
                    .shares
                    .iter()
                    .any(|r| r.simulation_id == simulation_id)
                {
                    return Err(EngineError::Precondition(format!(
                        "simulation {simulation_id} already exists"
                    )));
                }
                let share = ShareRef {
                    simulation_id,
                    document_sha256: sha256_hex(&doc),
                };
                self.s.shares.push(share.clone());
                Ok(Outcome::Shared { share })
            }
        }
    }

    async fn submit(&mut self, text: String) -> Result<Outcome, EngineError> {
        if text.trim().is_empty() {
            return Err(EngineError::Precondition(
                "learning content is empty".into(),
            ));
        }
        if self.s.status(StageId::Concept) == StageStatus::Committed {
            return Err(EngineError::StageOrderViolation(
                "the concept stage is committed; edit it instead of resubmitting".into(),
            ));
        }
        let graph = self
            .ask_graph(
                TemplateId::ConceptGraph,
                &[("learningContent", &text)],
                StageId::Concept,
            )
            .await?;
        self.s.learning_content = Some(text);
        self.set_draft(StageId::Concept, StageContent::Graph(graph), Vec::new());
        Ok(self.stage_outcome(StageId::Concept))
    }

    fn commit(&mut self, stage: StageId) -> Result<Outcome, EngineError> {
        if self.s.status(stage) != StageStatus::Draft {
            return Err(EngineError::NotADraft(stage));
        }
        if let Some(open) = stage
            .earlier()
            .iter()
            .find(|e| self.s.status(**e) != StageStatus::Committed)
        {
            return Err(EngineError::StageOrderViolation(format!(
                "commit {open} before committing {stage}"
            )));
        }
        let drift = {
            let g = |st| self.s.graph(st);
            match stage {
                StageId::Scenario => g(StageId::Concept)
                    .zip(g(stage))
                    .and_then(|(c, s)| validate::scenario_drift(c, s)),
                StageId::LearningGoal => g(StageId::Scenario)
                    .zip(g(stage))
                    .and_then(|(s, l)| validate::goal_drift(s, l)),
                StageId::UiGraph => g(StageId::LearningGoal)
                    .zip(g(stage))
                    .and_then(|(l, u)| validate::ui_drift(l, u)),
                _ => None,
            }
        };
        self.warn_all(drift);
        let slot = self.s.slot_mut(stage);
        slot.status = StageStatus::Committed;
        slot.last_committed = slot.content.clone();
        Ok(self.stage_outcome(stage))
    }

    fn discard(&mut self, stage: StageId) -> Result<Outcome, EngineError> {
        if self.s.status(stage) != StageStatus::Draft {
            return Err(EngineError::NotADraft(stage));
        }
        let prefix_ok = stage
            .earlier()
            .iter()
            .all(|e| self.s.status(*e) == StageStatus::Committed);
        let slot = self.s.slot_mut(stage);
        match slot.last_committed.clone() {
            Some(content) => {
                slot.content = Some(content);
                slot.status = if prefix_ok {
                    StageStatus::Committed
                } else {
                    StageStatus::Stale
                };
            }
            None => {
                slot.content = None;
                slot.status = StageStatus::Empty;
                slot.provenance.clear();
                slot.issues.clear();
            }
        }
        Ok(self.stage_outcome(stage))
    }

    async fn select_scenario(&mut self, pick: ScenarioPick) -> Result<Outcome, EngineError> {
        let concept = self
            .require_committed(StageId::Concept, "choosing a scenario")?
            .clone();
        let choice = match pick {
            ScenarioPick::Index(i) => ScenarioChoice::Option(
                self.s
                    .scenario_options
                    .get(i)
                    .cloned()
                    .ok_or_else(|| EngineError::NotFound(format!("scenario option {i}")))?,
            ),
            ScenarioPick::Option(o) => ScenarioChoice::Option(o),
            ScenarioPick::FreeText(t) if t.trim().is_empty() => {
                return Err(EngineError::Precondition("scenario text is empty".into()))
            }
            ScenarioPick::FreeText(t) => ScenarioChoice::FreeText(t.trim().to_string()),
        };
        let reply = self
            .ask_graph(
                TemplateId::ScenarioGraph,
                &[
                    ("graph", &concept.serialize()),
                    ("scenario", &choice.prompt_text()),
                ],
                StageId::Scenario,
            )
            .await?;
        let (graph, warnings) =
            validate::realign_scenario(&concept, &reply).map_err(EngineError::IdDrift)?;
        self.warn_all(warnings);
        self.s.scenario_choice = Some(choice);
        self.set_draft(StageId::Scenario, StageContent::Graph(graph), Vec::new());
        Ok(self.stage_outcome(StageId::Scenario))
    }

    async fn select_goal(&mut self, pick: GoalPick) -> Result<Outcome, EngineError> {
        let scenario = self
            .require_committed(StageId::Scenario, "choosing a learning goal")?
            .clone();
        let goal = match pick {
            GoalPick::Index(i) => self
                .s
                .goal_options
                .get(i)
                .cloned()
                .ok_or_else(|| EngineError::NotFound(format!("goal option {i}")))?,
            GoalPick::Option(o) => o,
        };
        if goal.goal_category.is_none() {
            return Err(EngineError::Precondition(
                "a learning goal needs a category".into(),
            ));
        }
        let reply = self
            .ask_graph(
                TemplateId::LearningGoalGraph,
                &[
                    ("graph", &scenario.serialize()),
                    ("hypothesis", &goal_text(&goal)),
                ],
                StageId::LearningGoal,
            )
            .await?;
        let (graph, warnings) =
            validate::goal_subset(&scenario, &reply).ok_or(EngineError::EmptyGoalGraph)?;
        self.warn_all(warnings);
        if self.s.goal_choice.as_ref() != Some(&goal) {
            self.s.procedure = None;
        }
        self.s.goal_choice = Some(goal);
        self.set_draft(
            StageId::LearningGoal,
            StageContent::Graph(graph),
            Vec::new(),
        );
        Ok(self.stage_outcome(StageId::LearningGoal))
    }

    async fn derive(&mut self) -> Result<ProcedureDerivation, EngineError> {
        let graph = self
            .require_committed(StageId::LearningGoal, "deriving a procedure")?
            .serialize();
        let hypothesis = self.hypothesis()?;
        let category = self
            .s
            .goal_choice
            .as_ref()
            .and_then(|g| g.goal_category)
            .ok_or_else(|| EngineError::Precondition("the learning goal has no category".into()))?;
        let mut answers: Vec<(String, String)> = Vec::new();
        match self
            .derive_chain(category, &graph, &hypothesis, &mut answers)
            .await
        {
            Ok(p) => {
                self.s.procedure = Some(p.clone());
                self.mark_stale_after(StageId::LearningGoal);
                Ok(p)
            }
            Err(e) => {
                if !answers.is_empty() {
                    self.journal(
                        Actor::System,
                        Op::Transform,
                        EventKind::PartialDerivation { answers },
                    );
                }
                Err(e)
            }
        }
    }

    async fn answer(
        &mut self,
        id: TemplateId,
        vars: &[(&str, &str)],
        answers: &mut Vec<(String, String)>,
    ) -> Result<String, EngineError> {
        let reply = self.ask(id, vars, None).await?;
        let cleaned = clean_answer(&reply);
        if cleaned.is_empty() {
            return Err(ExtractError::schema(None, format!("empty answer to {id}")).into());
        }
        answers.push((id.as_str().to_string(), cleaned.clone()));
        Ok(cleaned)
    }

    async fn derive_chain(
        &mut self,
        category: GoalCategory,
        graph: &str,
        hypothesis: &str,
        answers: &mut Vec<(String, String)>,
    ) -> Result<ProcedureDerivation, EngineError> {
        let base = [("graph", graph), ("hypothesis", hypothesis)];
        let mut p = ProcedureDerivation {
            category,
            independent_var: None,
            dependent_var: None,
            explanatory_process: None,
            experimental_object: None,
            underlying_process: None,
            procedure_text: String::new(),
        };
        match category {
            GoalCategory::Descriptive | GoalCategory::Explanatory => {
                let indep = self
                    .answer(TemplateId::IndependentVariable, &base, answers)
                    .await?;
                let dep = self
                    .answer(TemplateId::DependentVariable, &base, answers)
                    .await?;
                p.procedure_text = if category == GoalCategory::Descriptive {
                    let vars = [
                        ("dep", dep.as_str()),
                        ("graph", graph),
                        ("hypothesis", hypothesis),
                        ("indep", &indep),
                    ];
                    self.answer(TemplateId::DescriptiveProcedure, &vars, answers)
                        .await?
                } else {
                    let vars = [("dep", dep.as_str()), ("graph", graph), ("indep", &indep)];
                    let exp = self
                        .answer(TemplateId::ExplanatoryProcess, &vars, answers)
                        .await?;
                    let vars = [
                        ("exp", exp.as_str()),
                        ("graph", graph),
                        ("hypothesis", hypothesis),
                    ];
                    let text = self
                        .answer(TemplateId::ExplanatoryProcedure, &vars, answers)
                        .await?;
                    p.explanatory_process = Some(exp);
                    text
                };
                p.independent_var = Some(indep);
                p.dependent_var = Some(dep);
            }
            GoalCategory::Procedural => {
                let obj = self
                    .answer(TemplateId::ExperimentalObject, &base, answers)
                    .await?;
                let vars = [("graph", graph), ("hypothesis", hypothesis), ("obj", &obj)];
                let process = self
                    .answer(TemplateId::ProceduralProcess, &vars, answers)
                    .await?;
                let vars = [
                    ("graph", graph),
                    ("hypothesis", hypothesis),
                    ("obj", &obj),
                    ("proc", &process),
                ];
                p.procedure_text = self
                    .answer(TemplateId::ProceduralProcedure, &vars, answers)
                    .await?;
                p.experimental_object = Some(obj);
                p.underlying_process = Some(process);
            }
        }
        Ok(p)
    }

    async fn generate_ui(&mut self) -> Result<(), EngineError> {
        let goal = self
            .require_committed(StageId::LearningGoal, "generating the UI graph")?
            .clone();
        let procedure = self
            .s
            .procedure
            .as_ref()
            .map(|p| p.procedure_text.clone())
            .ok_or_else(|| EngineError::Precondition("derive the procedure first".into()))?;
        let hypothesis = self.hypothesis()?;
        let reply = self
            .ask_graph(
                TemplateId::UiGraph,
                &[
                    ("graph", &goal.serialize()),
                    ("hypothesis", &hypothesis),
                    ("proc", &procedure),
                ],
                StageId::UiGraph,
            )
            .await?;
        let (graph, warnings) = validate::ui_superset(&goal, &reply);
        let issues = warnings.clone();
        self.warn_all(warnings);
        self.set_draft(StageId::UiGraph, StageContent::Graph(graph), issues);
        Ok(())
    }

    async fn generate_code(&mut self) -> Result<(), EngineError> {
        let ui = self.live_graph(StageId::UiGraph, "generating code")?;
        let hypothesis = self.hypothesis()?;
        let reply = self
            .ask(
                TemplateId::SimulationCode,
                &[("graph", &ui.serialize()), ("hypothesis", &hypothesis)],
                Some(StageId::Code),
            )
            .await?;
        let doc = extract_document(&reply)?;
        self.set_document(doc, Vec::new());
        Ok(())
    }

    fn push_suggestion(
        &mut self,
        complaint: String,
        suggestion: WidgetSuggestion,
        ui: &Graph,
    ) -> Outcome {
        let problems = check_referents(&suggestion, ui);
        let entry = SuggestionEntry {
            index: self.s.suggestions.len(),
            complaint,
            populated: PopulatedSuggestion {
                valid: problems.is_empty(),
                suggestion,
                problems,
            },
            status: SuggestionStatus::Pending,
        };
        self.s.suggestions.push(entry.clone());
        Outcome::Suggestion { entry }
    }

    async fn resolve_complaint(
        &mut self,
        complaint: Complaint,
        type_code: Option<u8>,
    ) -> Result<Outcome, EngineError> {
        let doc = self.live_document("a complaint")?;
        let ui = self.live_graph(StageId::UiGraph, "a complaint")?;
        let resolver = self.eng.resolver();
        let code = match type_code {
            Some(k) => k,
            None => {
                let (k, warnings) = resolver.classify_change(&complaint, &doc, &ui).await?;
                self.transformed(TemplateId::SuggestChange, None, &k.to_string());
                self.warn_all(warnings);
                k
            }
        };
        let (populated, warnings) = resolver
            .populate_suggestion(code, &complaint, &doc, &ui)
            .await?;
        let template = TemplateId::populate_for(code).expect("validated by populate");
        self.transformed(template, None, &populated.suggestion.to_json().to_string());
        self.warn_all(warnings);
        let entry = SuggestionEntry {
            index: self.s.suggestions.len(),
            complaint: complaint.text.clone(),
            populated,
            status: SuggestionStatus::Pending,
        };
        self.s.suggestions.push(entry.clone());
        Ok(Outcome::Suggestion { entry })
    }

    async fn chat(
        &mut self,
        mut complaint: Complaint,
        type_code: Option<u8>,
    ) -> Result<Outcome, EngineError> {
        let marks: Vec<Mark> = complaint
            .annotation_refs
            .iter()
            .map(|label| {
                self.s
                    .annotations
                    .iter()
                    .find(|a| &a.label == label)
                    .map(|a| mark(&a.bbox, Some(&a.label)))
                    .ok_or_else(|| EngineError::NotFound(format!("annotation {label}")))
            })
            .collect::<Result<_, _>>()?;
        if complaint.screenshot.is_none() && !marks.is_empty() {
            let doc = self.live_document("a complaint")?;
            complaint.screenshot = Some(self.eng.capture(&doc, &marks).await?);
        }
        self.resolve_complaint(complaint, type_code).await
    }

    fn pending(&mut self, index: usize) -> Result<&mut SuggestionEntry, EngineError> {
        let entry = self
            .s
            .suggestions
            .get_mut(index)
            .ok_or_else(|| EngineError::NotFound(format!("suggestion {index}")))?;
        if entry.status != SuggestionStatus::Pending {
            return Err(EngineError::Precondition(format!(
                "suggestion {index} was already answered"
            )));
        }
        Ok(entry)
    }

    async fn accept(
        &mut self,
        index: usize,
        edited: Option<WidgetSuggestion>,
        screenshot: Option<Png>,
    ) -> Result<Outcome, EngineError> {
        let original = self.pending(index)?.populated.suggestion.clone();
        let suggestion = edited.unwrap_or(original);
        let doc = self.live_document("applying a suggestion")?;
        let ui = self.live_graph(StageId::UiGraph, "applying a suggestion")?;
        let problems = check_referents(&suggestion, &ui);
        if !problems.is_empty() {
            return Err(EngineError::InvalidSuggestion(problems));
        }
        let resolver = self.eng.resolver();
        match &suggestion.payload {
            SuggestionPayload::EditAssumptions { node, assumptions } => {
                self.apply_assumptions(node, assumptions.clone()).await?;
            }
            SuggestionPayload::Redraw { bbox, svg } => {
                let shot = match screenshot {
                    Some(p) => p,
                    None => self.eng.capture(&doc, &[mark(bbox, None)]).await?,
                };
                let updated = resolver.substitute_svg(&doc, &shot.0, bbox, svg).await?;
                self.transformed(TemplateId::SubstituteSvg, Some(StageId::Code), &updated);
                self.set_document(updated, Vec::new());
            }
            payload => {
                let action = graph_action(payload).expect("graph-type payload");
                let mut next = apply_widget(&ui, &action)?;
                let mut warnings = Vec::new();
                if let SuggestionPayload::AddNode { label } = payload {
                    let new_id = mint_node_id(&ui, label);
                    let (linked, w) = resolver.auto_add_edges(&ui, &next, &new_id, label).await?;
                    self.transformed(
                        TemplateId::AutoAddEdges,
                        Some(StageId::UiGraph),
                        &linked.serialize(),
                    );
                    next = linked;
                    warnings.extend(w);
                }
                let hypothesis = self.hypothesis()?;
                let (updated, w) = resolver.patch_code(&ui, &next, &doc, &hypothesis).await?;
                self.transformed(TemplateId::GraphCodePatch, Some(StageId::Code), &updated);
                warnings.extend(w);
                self.warn_all(warnings);
                self.set_draft(StageId::UiGraph, StageContent::Graph(next), Vec::new());
                self.set_document(updated, Vec::new());
            }
        }
        let entry = self.s.suggestions.get_mut(index).expect("checked above");
        entry.status = SuggestionStatus::Accepted;
        entry.populated = PopulatedSuggestion {
            suggestion,
            valid: true,
            problems: Vec::new(),
        };
        let entry = entry.clone();
        Ok(Outcome::Suggestion { entry })
    }

    async fn apply_assumptions(
        &mut self,
        node: &str,
        list: Vec<String>,
    ) -> Result<(), EngineError> {
        let doc = self.live_document("editing assumptions")?;
        let ui = self.live_graph(StageId::UiGraph, "editing assumptions")?;
        let key = resolve_node(&ui, node)
            .ok_or_else(|| ResolutionError::UnknownAssumptionNode(node.to_string()))?;
        let list: Vec<String> = list
            .into_iter()
            .map(|a| a.trim().to_string())
            .filter(|a| !a.is_empty())
            .collect();
        let updated = self
            .eng
            .resolver()
            .apply_assumptions(&doc, &ui, &key, &list)
            .await?;
        self.transformed(TemplateId::UpdateAssumptions, Some(StageId::Code), &updated);
        if let Some(sheet) = self.s.assumptions.as_mut() {
            sheet.entries.insert(key, list);
        }
        self.set_document(updated, Vec::new());
        Ok(())
    }

    async fn run_tests(&mut self) -> Result<Outcome, EngineError> {
        let doc = self.live_document("testing")?;
        let ui = self.live_graph(StageId::UiGraph, "testing")?;
        let hypothesis = self.hypothesis()?;
        let result = self
            .eng
            .harness()
            .run_test_cycle(&doc, &ui, &hypothesis)
            .await;
        let outcome = match result {
            Ok(o) => o,
            Err(HarnessError::Unresolved { errors, iterations }) => {
                for iteration in &iterations {
                    self.journal(
                        Actor::Model,
                        Op::Transform,
                        EventKind::FixIteration {
                            cycle: 0,
                            iteration: iteration.clone(),
                        },
                    );
                }
                return Err(HarnessError::Unresolved { errors, iterations }.into());
            }
            Err(e) => return Err(e.into()),
        };
        let mut fix_iterations = 0;
        for (cycle, report) in outcome.cycles.iter().enumerate() {
            for iteration in &report.fixes.iterations {
                fix_iterations += 1;
                self.journal(
                    Actor::Model,
                    Op::Transform,
                    EventKind::FixIteration {
                        cycle,
                        iteration: iteration.clone(),
                    },
                );
            }
            let case_warnings: Vec<Warning> = report
                .case_errors
                .iter()
                .map(|e| {
                    Warning::new(
                        crate::warning::WarningCode::DroppedElements,
                        format!("skipped test case {}: {}", e.index, e.error),
                    )
                })
                .collect();
            self.warn_all(case_warnings);
        }
        let cases = serde_json::to_string(&outcome.last().cases).expect("cases serialize");
        self.transformed(TemplateId::TestGeneration, None, &cases);
        self.transformed(
            TemplateId::Verification,
            Some(StageId::Code),
            &outcome.document,
        );
        let last = outcome.last();
        let changed = outcome.document != doc;
        let report = TestReport {
            cycles: outcome.cycles.len(),
            fix_iterations,
            cases: last.cases.clone(),
            run: last.run.clone(),
            guided: last.run.guided.iter().map(|(_, c)| c.clone()).collect(),
            played: BTreeMap::new(),
            document_changed: changed,
        };
        if changed {
            self.set_document(outcome.document.clone(), Vec::new());
        }
        self.s.tests = Some(report.clone());
        Ok(Outcome::Tests {
            report: Box::new(report),
        })
    }

    async fn verdict(
        &mut self,
        case: usize,
        pass: bool,
        note: String,
    ) -> Result<Outcome, EngineError> {
        let report = self
            .s
            .tests
            .as_ref()
            .ok_or_else(|| EngineError::Precondition("run the tests first".into()))?;
        let tc = report
            .guided
            .get(case)
            .cloned()
            .ok_or_else(|| EngineError::NotFound(format!("guided test {case}")))?;
        if pass {
            return Ok(Outcome::Verdict { case, pass });
        }
        let shot = report.played.get(&case).map(|r| r.post_screenshot.clone());
        let mut text = tc.description.trim().to_string();
        if !note.trim().is_empty() {
            if !text.is_empty() && !text.ends_with('.') {
                text.push('.');
            }
            text = format!("{text} {}", note.trim()).trim().to_string();
        }
        let mut complaint = Complaint::new(text);
        complaint.screenshot = shot;
        self.resolve_complaint(complaint, None).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answers_are_cleaned() {
        assert_eq!(
            clean_answer("  \"Amount of sunlight.\"\n"),
            "Amount of sunlight"
        );
        assert_eq!(clean_answer("Weight of the basket"), "Weight of the basket");
    }

    #[test]
    fn error_codes_name_the_variant() {
        assert_eq!(EngineError::NotADraft(StageId::Code).code(), "NotADraft");
        assert_eq!(
            EngineError::Extract(ExtractError::NoGraphFound).code(),
            "NoGraphFound"
        );
        assert_eq!(
            EngineError::NotADraft(StageId::Code).class(),
            ErrorClass::Conflict
        );
    }
}
