use std::collections::HashMap;

use crate::graph::{is_valid_edge_label, is_valid_node_label, Graph, WidgetAction};
use crate::prompts::{extract_svg, SuggestionPayload, WidgetSuggestion};
use crate::warning::{Warning, WarningCode};

use super::assumptions::resolve_node;

/// Reasons a suggestion cannot be applied to `ui` as it stands.
pub fn check_referents(s: &WidgetSuggestion, ui: &Graph) -> Vec<String> {
    let mut problems = Vec::new();
    if s.message.trim().is_empty() {
        problems.push("message is empty".to_string());
    }
    let node = |id: &str, problems: &mut Vec<String>| {
        if !ui.contains_node(id) {
            problems.push(format!("node `{id}` is not in the UI graph"));
        }
    };
    let edge = |source: &str, target: &str, label: &str, problems: &mut Vec<String>| {
        if !ui.contains_edge(source, target, label) {
            problems.push(format!(
                "link {source} -->|{label}| {target} is not in the UI graph"
            ));
        }
    };
    match &s.payload {
        SuggestionPayload::AddNode { label } => {
            if !is_valid_node_label(label) {
                problems.push(format!("`{label}` is not a usable node label"));
            }
        }
        SuggestionPayload::AddEdge {
            source,
            target,
            label,
        } => {
            node(source, &mut problems);
            node(target, &mut problems);
            if !is_valid_edge_label(label) {
                problems.push(format!("`{label}` is not a usable link label"));
            } else if ui.contains_edge(source, target, label) {
                problems.push(format!(
                    "link {source} -->|{label}| {target} already exists"
                ));
            }
        }
        SuggestionPayload::EditAssumptions {
            node: n,
            assumptions,
        } => {
            if resolve_node(ui, n).is_none() {
                problems.push(format!("node `{n}` is not in the UI graph"));
            }
            if assumptions.iter().all(|a| a.trim().is_empty()) {
                problems.push("assumption list is empty".to_string());
            }
        }
        SuggestionPayload::Redraw { bbox, svg } => {
            if !bbox.is_valid() {
                problems.push("box must have positive width and height".to_string());
            }
            if extract_svg(svg).is_err() {
                problems.push("svg is not a single balanced <svg> element".to_string());
            }
        }
        SuggestionPayload::EditNode {
            node: n,
            old_label,
            new_label,
        } => match ui.node(n) {
            None => problems.push(format!("node `{n}` is not in the UI graph")),
            Some(current) => {
                if &current.label != old_label {
                    problems.push(format!(
                        "node `{n}` is labelled `{}`, not `{old_label}`",
                        current.label
                    ));
                }
                if !is_valid_node_label(new_label) {
                    problems.push(format!("`{new_label}` is not a usable node label"));
                }
            }
        },
        SuggestionPayload::EditEdge {
            source,
            target,
            old_label,
            new_label,
        } => {
            edge(source, target, old_label, &mut problems);
            if !is_valid_edge_label(new_label) {
                problems.push(format!("`{new_label}` is not a usable link label"));
            }
        }
        SuggestionPayload::RemoveNode { node: n } => node(n, &mut problems),
        SuggestionPayload::RemoveEdge {
            source,
            target,
            label,
        } => edge(source, target, label, &mut problems),
    }
    problems
}

/// The UI-graph edit behind a graph-type suggestion (types 1, 2, 5–8).
pub fn graph_action(p: &SuggestionPayload) -> Option<WidgetAction> {
    Some(match p {
        SuggestionPayload::AddNode { label } => WidgetAction::add_node(label.clone()),
        SuggestionPayload::AddEdge {
            source,
            target,
            label,
        } => WidgetAction::add_link(source.clone(), target.clone(), label.clone()),
        SuggestionPayload::EditNode {
            node, new_label, ..
        } => WidgetAction::edit_node_label(node.clone(), new_label.clone()),
        SuggestionPayload::EditEdge {
            source,
            target,
            old_label,
            new_label,
        } => WidgetAction::edit_link_label(
            source.clone(),
            target.clone(),
            old_label.clone(),
            new_label.clone(),
        ),
        SuggestionPayload::RemoveNode { node } => WidgetAction::remove_node(node.clone()),
        SuggestionPayload::RemoveEdge {
            source,
            target,
            label,
        } => WidgetAction::remove_link(source.clone(), target.clone(), label.clone()),
        SuggestionPayload::EditAssumptions { .. } | SuggestionPayload::Redraw { .. } => {
            return None
        }
    })
}

fn same_label(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

/// Adds the edges of `proposed` that attach to known nodes onto
/// `with_node`. The new node may appear under any id as long as its label
/// matches. Nothing is ever removed or renamed.
pub fn merge_added_edges(
    before: &Graph,
    with_node: &Graph,
    proposed: &Graph,
    new_id: &str,
    new_label: &str,
) -> (Graph, Vec<Warning>) {
    let mut ids: HashMap<&str, &str> = HashMap::new();
    let mut novel = Vec::new();
    for n in proposed.nodes() {
        if with_node.contains_node(&n.id) {
            ids.insert(&n.id, &n.id);
        } else if same_label(&n.label, new_label) {
            ids.insert(&n.id, new_id);
        } else {
            novel.push(format!("{}[{}]", n.id, n.label));
        }
    }
    let mut out = with_node.clone();
    let mut added = 0;
    for e in proposed.edges() {
        let (Some(s), Some(t)) = (ids.get(e.source.as_str()), ids.get(e.target.as_str())) else {
            continue;
        };
        if !out.contains_edge(s, t, &e.label) && out.add_edge(*s, *t, e.label.clone()).is_ok() {
            added += 1;
        }
    }
    let mut warnings = Vec::new();
    let lost_nodes = before
        .nodes()
        .iter()
        .filter(|n| proposed.node(&n.id).is_none_or(|p| p.label != n.label))
        .count();
    let lost_edges = before
        .edges()
        .iter()
        .filter(|e| !proposed.contains_edge(&e.source, &e.target, &e.label))
        .count();
    if lost_nodes + lost_edges > 0 {
        warnings.push(Warning::new(
            WarningCode::ModelRepair,
            format!("restored {lost_nodes} node(s) and {lost_edges} link(s) the reply dropped or changed"),
        ));
    }
    if !novel.is_empty() {
        warnings.push(Warning::new(
            WarningCode::DroppedElements,
            format!("ignored unrequested nodes {}", novel.join(", ")),
        ));
    }
    tracing::debug!(added, "auto-added links");
    (out, warnings)
}

/// The part of `proposed` that exists in `ui`, using `ui`'s labels.
/// Unknown ids are matched by label when that is unambiguous.
pub fn restrict_to(proposed: &Graph, ui: &Graph) -> (Graph, Vec<Warning>) {
    let mut ids: HashMap<&str, &str> = HashMap::new();
    let mut stripped = Vec::new();
    let mut relabelled = 0;
    for n in proposed.nodes() {
        if let Some(u) = ui.node(&n.id) {
            if u.label != n.label {
                relabelled += 1;
            }
            ids.insert(&n.id, &u.id);
            continue;
        }
        let mut by_label = ui.nodes().iter().filter(|u| same_label(&u.label, &n.label));
        match (by_label.next(), by_label.next()) {
            (Some(u), None) => {
                ids.insert(&n.id, &u.id);
            }
            _ => stripped.push(format!("{}[{}]", n.id, n.label)),
        }
    }
    let keep: Vec<&str> = ui
        .nodes()
        .iter()
        .map(|n| n.id.as_str())
        .filter(|id| ids.values().any(|v| v == id))
        .collect();
    let mut out = Graph::new(ui.direction());
    for id in &keep {
        let n = ui.node(id).expect("kept from ui");
        out.add_node(n.id.clone(), n.label.clone())
            .expect("ids unique in ui");
    }
    let mut stripped_edges = 0;
    for e in proposed.edges() {
        let mapped = (ids.get(e.source.as_str()), ids.get(e.target.as_str()));
        match mapped {
            (Some(s), Some(t)) if ui.contains_edge(s, t, &e.label) => {
                if !out.contains_edge(s, t, &e.label) {
                    out.add_edge(*s, *t, e.label.clone())
                        .expect("endpoints kept");
                }
            }
            _ => stripped_edges += 1,
        }
    }
    let mut warnings = Vec::new();
    if !stripped.is_empty() || stripped_edges > 0 {
        warnings.push(Warning::new(
            WarningCode::DroppedElements,
            format!(
                "stripped {stripped_edges} link(s) and node(s) [{}] not in the UI graph",
                stripped.join(", ")
            ),
        ));
    }
    if relabelled > 0 {
        warnings.push(Warning::new(
            WarningCode::ModelRepair,
            format!("restored the original label of {relabelled} node(s)"),
        ));
    }
    (out, warnings)
}
