//! Inverse correction: turn a complaint about the running simulation into
//! a typed suggestion, and carry accepted suggestions back into the UI
//! graph and the document.

mod assumptions;
mod checks;

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{diff_graphs, parse_graph, Graph, GraphError, WidgetAction};
use crate::harness::{missing_markers, Png};
use crate::llm::{Gateway, ImageInput, LlmError, LlmRequest};
use crate::prompts::{
    extract_document, extract_graph, extract_svg, parse_widget_json, BoundingBox, ExtractError,
    Registry, SuggestionPayload, TemplateError, TemplateId, WidgetSuggestion,
};
use crate::warning::{Warning, WarningCode};

pub use assumptions::{node_keys, resolve_node, AssumptionSheet};
pub use checks::{check_referents, graph_action, merge_added_edges, restrict_to};

#[derive(Debug, Error)]
pub enum ResolutionError {
    #[error("complaint text is empty")]
    EmptyComplaint,
    #[error("`{0}` is not a node of the UI graph")]
    UnknownMention(String),
    #[error("annotation box must have positive width and height")]
    DegenerateBox,
    #[error("sketch image is empty")]
    EmptySketch,
    #[error("no UI graph element matches the selection")]
    EmptySelection,
    #[error("`{0}` is not a node of the assumption sheet")]
    UnknownAssumptionNode(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// A chat message describing something wrong with the simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Complaint {
    pub text: String,
    #[serde(default)]
    pub annotation_refs: Vec<String>,
    /// UI-graph node ids picked with `@`.
    #[serde(default)]
    pub mention_refs: Vec<String>,
    /// Annotated simulation screenshot, when the client captured one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screenshot: Option<Png>,
}

impl Complaint {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            annotation_refs: Vec::new(),
            mention_refs: Vec::new(),
            screenshot: None,
        }
    }

    pub fn validate(&self, ui: &Graph) -> Result<(), ResolutionError> {
        if self.text.trim().is_empty() {
            return Err(ResolutionError::EmptyComplaint);
        }
        match self.mention_refs.iter().find(|m| !ui.contains_node(m)) {
            Some(m) => Err(ResolutionError::UnknownMention(m.clone())),
            None => Ok(()),
        }
    }

    fn prompt_text(&self, ui: &Graph) -> String {
        let text = self.text.trim().trim_end_matches('.').to_string();
        if self.mention_refs.is_empty() {
            return text;
        }
        let named: Vec<String> = self
            .mention_refs
            .iter()
            .filter_map(|id| ui.node(id))
            .map(|n| format!("{}[{}]", n.id, n.label))
            .collect();
        format!("{text} (UI Map nodes mentioned: {})", named.join(", "))
    }
}

/// A populated suggestion, kept even when its referents do not resolve so
/// that it can be shown greyed out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PopulatedSuggestion {
    pub suggestion: WidgetSuggestion,
    pub valid: bool,
    #[serde(default)]
    pub problems: Vec<String>,
}

/// Leading integer of a reply such as `8.` or `Type 3`.
pub fn first_integer(reply: &str) -> Option<u64> {
    let start = reply.find(|c: char| c.is_ascii_digit())?;
    let digits: String = reply[start..]
        .chars()
        .take_while(char::is_ascii_digit)
        .collect();
    digits.parse().ok()
}

fn parse_type_code(reply: &str) -> Result<u8, ExtractError> {
    match first_integer(reply) {
        Some(k @ 1..=8) => Ok(k as u8),
        _ => Err(ExtractError::BadTypeCode(
            reply.trim().chars().take(40).collect(),
        )),
    }
}

fn describe(action: &WidgetAction, before: &Graph) -> String {
    match action {
        WidgetAction::AddNode { label } => format!("added node [{label}]"),
        WidgetAction::AddLink {
            source,
            target,
            label,
        } => format!("added link {source} -->|{label}| {target}"),
        WidgetAction::RemoveNode { id } => {
            let label = before.node(id).map_or("", |n| n.label.as_str());
            format!("removed node {id}[{label}]")
        }
        WidgetAction::RemoveLink {
            source,
            target,
            label,
        } => format!("removed link {source} -->|{label}| {target}"),
        WidgetAction::EditNodeLabel { id, new_label } => {
            let old = before.node(id).map_or("", |n| n.label.as_str());
            format!("renamed node {id} from [{old}] to [{new_label}]")
        }
        WidgetAction::EditLinkLabel {
            source,
            target,
            old_label,
            new_label,
        } => format!("relabelled link {source} -->|{old_label}| {target} as |{new_label}|"),
    }
}

/// Node ids touched by the difference between two graphs.
fn touched_ids(before: &Graph, after: &Graph) -> Vec<String> {
    let known = before.node_ids();
    let mut ids = Vec::new();
    let mut push = |id: &str| {
        if !ids.iter().any(|x| x == id) {
            ids.push(id.to_string());
        }
    };
    for action in diff_graphs(before, after) {
        match &action {
            WidgetAction::AddNode { label } => {
                for n in after
                    .nodes()
                    .iter()
                    .filter(|n| &n.label == label && !known.contains(n.id.as_str()))
                {
                    push(&n.id);
                }
            }
            WidgetAction::AddLink { source, target, .. }
            | WidgetAction::RemoveLink { source, target, .. }
            | WidgetAction::EditLinkLabel { source, target, .. } => {
                push(source);
                push(target);
            }
            WidgetAction::RemoveNode { id } | WidgetAction::EditNodeLabel { id, .. } => push(id),
        }
    }
    ids
}

/// Issues the model requests behind every correction flow.
#[derive(Clone)]
pub struct Resolver {
    registry: Arc<Registry>,
    gateway: Arc<Gateway>,
}

impl Resolver {
    pub fn new(registry: Arc<Registry>, gateway: Arc<Gateway>) -> Self {
        Self { registry, gateway }
    }

    fn context_request(
        &self,
        id: TemplateId,
        vars: &[(&str, &str)],
        context: &[(&str, &str)],
        image: Option<&[u8]>,
    ) -> Result<LlmRequest, ResolutionError> {
        let text = self.registry.render_with_context(id, vars, context)?;
        let mut req = LlmRequest::user(id.as_str(), text);
        if let Some(png) = image {
            req = req.with_image(ImageInput::png(png.to_vec()));
        }
        Ok(req)
    }

    /// Sends a repair follow-up once when the first reply did not parse.
    async fn with_repair<T>(
        &self,
        req: LlmRequest,
        expected: &str,
        parse: impl Fn(&str) -> Result<T, ExtractError>,
    ) -> Result<(T, bool), ResolutionError> {
        let reply = self.gateway.complete(&req).await?;
        let problem = match parse(&reply) {
            Ok(v) => return Ok((v, false)),
            Err(e) => e,
        };
        tracing::info!(tag = %req.tag, %problem, "asking the model to repair its reply");
        let repair = self.registry.render(
            TemplateId::ReplyRepair,
            &[
                ("problem", problem.to_string().as_str()),
                ("expected", expected),
                ("reply", &reply),
            ],
        )?;
        let mut follow = req.follow_up(reply, repair);
        follow.tag = TemplateId::ReplyRepair.as_str().to_string();
        let second = self.gateway.complete(&follow).await?;
        Ok((parse(&second)?, true))
    }

    /// Picks one of the eight change types for a complaint.
    pub async fn classify_change(
        &self,
        c: &Complaint,
        code: &str,
        ui: &Graph,
    ) -> Result<(u8, Vec<Warning>), ResolutionError> {
        c.validate(ui)?;
        let ui_text = ui.serialize();
        let req = self.context_request(
            TemplateId::SuggestChange,
            &[("prompt", &c.prompt_text(ui))],
            &[("HTML code", code), ("UI Map", &ui_text)],
            c.screenshot.as_ref().map(|p| p.0.as_slice()),
        )?;
        let (code, repaired) = self
            .with_repair(req, "a single number from 1 to 8", parse_type_code)
            .await?;
        let warnings = if repaired {
            vec![Warning::new(
                WarningCode::ModelRepair,
                "type code obtained after a repair request",
            )]
        } else {
            Vec::new()
        };
        Ok((code, warnings))
    }

    /// Fills in the widget for `type_code` and checks its referents.
    pub async fn populate_suggestion(
        &self,
        type_code: u8,
        c: &Complaint,
        code: &str,
        ui: &Graph,
    ) -> Result<(PopulatedSuggestion, Vec<Warning>), ResolutionError> {
        let template = TemplateId::populate_for(type_code)
            .ok_or_else(|| ExtractError::BadTypeCode(type_code.to_string()))?;
        c.validate(ui)?;
        let ui_text = ui.serialize();
        let req = self.context_request(
            template,
            &[("prompt", &c.prompt_text(ui))],
            &[("HTML code", code), ("UI Map", &ui_text)],
            c.screenshot.as_ref().map(|p| p.0.as_slice()),
        )?;
        let parse = |reply: &str| {
            let s = parse_widget_json(reply)?;
            if s.type_code() != type_code {
                return Err(ExtractError::schema(
                    Some(type_code),
                    format!("reply is a type {} suggestion", s.type_code()),
                ));
            }
            Ok(s)
        };
        let fields = crate::prompts::payload_fields(type_code)
            .unwrap_or_default()
            .join(", ");
        let expected =
            format!("a single JSON object with the keys type ({type_code}), message, {fields}");
        let (suggestion, repaired) = self.with_repair(req, &expected, parse).await?;
        let problems = check_referents(&suggestion, ui);
        let mut warnings = Vec::new();
        if repaired {
            warnings.push(Warning::new(
                WarningCode::ModelRepair,
                "suggestion obtained after a repair request",
            ));
        }
        Ok((
            PopulatedSuggestion {
                valid: problems.is_empty(),
                suggestion,
                problems,
            },
            warnings,
        ))
    }

    /// Updates the document for a UI-graph edit with a scoped patch, or
    /// regenerates it when the patch reply is unusable.
    pub async fn patch_code(
        &self,
        before: &Graph,
        after: &Graph,
        code: &str,
        goal: &str,
    ) -> Result<(String, Vec<Warning>), ResolutionError> {
        let change: Vec<String> = diff_graphs(before, after)
            .iter()
            .map(|a| describe(a, before))
            .collect();
        let ids = touched_ids(before, after);
        let mut sub = after.extract_subgraph(ids.iter().filter(|id| after.contains_node(id)))?;
        if sub.is_empty() {
            sub = before.extract_subgraph(ids.iter().filter(|id| before.contains_node(id)))?;
        }
        let text = self.registry.render(
            TemplateId::GraphCodePatch,
            &[
                ("change", change.join("; ").as_str()),
                ("subgraph", &sub.serialize()),
                ("graph", &after.serialize()),
                ("htmlCode", code),
            ],
        )?;
        let reply = self
            .gateway
            .complete(&LlmRequest::user("graph_code_patch", text))
            .await?;
        let problem = match extract_document(&reply) {
            Ok(doc) => {
                let missing = missing_markers(&doc);
                if missing.is_empty() {
                    return Ok((doc, Vec::new()));
                }
                format!("patched document lacks {}", missing.join(", "))
            }
            Err(e) => e.to_string(),
        };
        tracing::info!(%problem, "code patch unusable, regenerating");
        let text = self.registry.render(
            TemplateId::SimulationCode,
            &[("graph", after.serialize().as_str()), ("hypothesis", goal)],
        )?;
        let reply = self
            .gateway
            .complete(&LlmRequest::user("simulation_code", text))
            .await?;
        let doc = extract_document(&reply)?;
        Ok((
            doc,
            vec![Warning::new(
                WarningCode::ModelRepair,
                format!("{problem}; document regenerated from the UI graph"),
            )],
        ))
    }

    /// Connects a just-added node. Only additions survive: anything the
    /// model dropped or renamed is restored.
    pub async fn auto_add_edges(
        &self,
        before: &Graph,
        with_node: &Graph,
        new_id: &str,
        new_label: &str,
    ) -> Result<(Graph, Vec<Warning>), ResolutionError> {
        let text = self.registry.render(
            TemplateId::AutoAddEdges,
            &[
                ("UIMap", before.serialize().as_str()),
                ("newNodeName", new_label),
            ],
        )?;
        let reply = self
            .gateway
            .complete(&LlmRequest::user("auto_add_edges", text))
            .await?;
        let proposed = parse_graph(&extract_graph(&reply)?)?;
        Ok(merge_added_edges(
            before, with_node, &proposed, new_id, new_label,
        ))
    }

    /// The part of the UI graph that the circled regions show.
    pub async fn select_subgraph(
        &self,
        annotated: &[u8],
        code: &str,
        ui: &Graph,
    ) -> Result<(Graph, Vec<Warning>), ResolutionError> {
        let ui_text = ui.serialize();
        let req = self.context_request(
            TemplateId::SubgraphSelection,
            &[],
            &[("HTML code", code), ("UI interactivity graph", &ui_text)],
            Some(annotated),
        )?;
        let reply = self.gateway.complete(&req).await?;
        let proposed = parse_graph(&extract_graph(&reply)?)?;
        let (sub, warnings) = restrict_to(&proposed, ui);
        if sub.is_empty() {
            return Err(ResolutionError::EmptySelection);
        }
        Ok((sub, warnings))
    }

    pub async fn get_assumptions(
        &self,
        code: &str,
        ui: &Graph,
    ) -> Result<(AssumptionSheet, Vec<Warning>), ResolutionError> {
        let text = self.registry.render(
            TemplateId::CodeAssumptions,
            &[("htmlCode", code), ("UIMap", ui.serialize().as_str())],
        )?;
        let reply = self
            .gateway
            .complete(&LlmRequest::user("code_assumptions", text))
            .await?;
        Ok(assumptions::parse_sheet(&reply, ui)?)
    }

    /// Rewrites the document so that one node follows an edited list.
    pub async fn apply_assumptions(
        &self,
        code: &str,
        ui: &Graph,
        node_key: &str,
        list: &[String],
    ) -> Result<String, ResolutionError> {
        if !node_keys(ui).iter().any(|(k, _)| k == node_key) {
            return Err(ResolutionError::UnknownAssumptionNode(node_key.to_string()));
        }
        if list.iter().all(|a| a.trim().is_empty()) {
            return Err(ExtractError::schema(
                Some(3),
                format!("assumption list for `{node_key}` is empty"),
            )
            .into());
        }
        let list_json = serde_json::to_string(list).expect("strings serialize");
        let text = self.registry.render(
            TemplateId::UpdateAssumptions,
            &[
                ("graph", ui.serialize().as_str()),
                ("htmlCode", code),
                ("node", node_key),
                ("newAssumptions", &list_json),
            ],
        )?;
        let reply = self
            .gateway
            .complete(&LlmRequest::user("update_assumptions", text))
            .await?;
        Ok(extract_document(&reply)?)
    }

    pub async fn sketch_to_svg(
        &self,
        sketch: &[u8],
        ui: &Graph,
    ) -> Result<String, ResolutionError> {
        if sketch.is_empty() {
            return Err(ResolutionError::EmptySketch);
        }
        let ui_text = ui.serialize();
        let req = self.context_request(
            TemplateId::SketchToSvg,
            &[],
            &[("UI Map", &ui_text)],
            Some(sketch),
        )?;
        let reply = self.gateway.complete(&req).await?;
        Ok(extract_svg(&reply)?)
    }

    /// Swaps the visual inside the red box for `svg`. `annotated` is the
    /// screenshot with that box drawn on it.
    pub async fn substitute_svg(
        &self,
        code: &str,
        annotated: &[u8],
        bbox: &BoundingBox,
        svg: &str,
    ) -> Result<String, ResolutionError> {
        if !bbox.is_valid() {
            return Err(ResolutionError::DegenerateBox);
        }
        let req = self.context_request(
            TemplateId::SubstituteSvg,
            &[],
            &[("New SVG", svg), ("HTML code", code)],
            Some(annotated),
        )?;
        let reply = self.gateway.complete(&req).await?;
        Ok(extract_document(&reply)?)
    }
}

/// Node ids that a graph-type suggestion refers to, for scoping checks.
pub fn referenced_ids(p: &SuggestionPayload) -> HashSet<&str> {
    match p {
        SuggestionPayload::AddEdge { source, target, .. }
        | SuggestionPayload::EditEdge { source, target, .. }
        | SuggestionPayload::RemoveEdge { source, target, .. } => {
            [source.as_str(), target.as_str()].into()
        }
        SuggestionPayload::EditAssumptions { node, .. }
        | SuggestionPayload::EditNode { node, .. }
        | SuggestionPayload::RemoveNode { node } => [node.as_str()].into(),
        SuggestionPayload::AddNode { .. } | SuggestionPayload::Redraw { .. } => HashSet::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lenient_type_codes() {
        assert_eq!(parse_type_code("8."), Ok(8));
        assert_eq!(parse_type_code("Type 3 would fit"), Ok(3));
        assert!(matches!(
            parse_type_code("nine"),
            Err(ExtractError::BadTypeCode(_))
        ));
        assert!(matches!(
            parse_type_code("12"),
            Err(ExtractError::BadTypeCode(_))
        ));
        assert!(matches!(
            parse_type_code("0"),
            Err(ExtractError::BadTypeCode(_))
        ));
    }

    #[test]
    fn touched_ids_cover_renames_and_removals() {
        let a =
            parse_graph("graph LR\n    A[A]\n    B[B]\n    C[C]\n    A -->|x| B\n    B -->|y| C")
                .unwrap();
        let b = parse_graph("graph LR\n    A[A2]\n    B[B]\n    A -->|x| B").unwrap();
        let ids = touched_ids(&a, &b);
        assert!(ids.contains(&"A".to_string()) && ids.contains(&"C".to_string()));
    }
}
