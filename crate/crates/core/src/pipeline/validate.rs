//! Checks applied to model output before it becomes a draft.

use std::collections::{BTreeSet, HashMap};

use crate::graph::Graph;
use crate::harness::{disable_debug_flag, missing_markers};
use crate::resolution::restrict_to;
use crate::warning::{Warning, WarningCode};

pub const EXPECTED_SCENARIOS: usize = 8;
pub const EXPECTED_GOALS: usize = 6;
const CONTROL_WORDS: [&str; 5] = ["slider", "button", "toggle", "input", "control"];

type Signature = Vec<(bool, String, String)>;

/// Incident links of `id`, with neighbours outside `known` blanked out.
fn signature(g: &Graph, id: &str, known: &dyn Fn(&str) -> Option<String>) -> Signature {
    let mut sig: Signature = g
        .edges()
        .iter()
        .filter_map(|e| {
            if e.source == id {
                Some((
                    true,
                    e.label.clone(),
                    known(&e.target).unwrap_or_else(|| "?".into()),
                ))
            } else if e.target == id {
                Some((
                    false,
                    e.label.clone(),
                    known(&e.source).unwrap_or_else(|| "?".into()),
                ))
            } else {
                None
            }
        })
        .collect();
    sig.sort();
    sig
}

/// Forces a scenario reply onto the concept graph's ids and links while
/// keeping the reply's labels. Renamed ids are matched back by their
/// links; `Err` carries the reason when that matching is ambiguous.
pub fn realign_scenario(concept: &Graph, reply: &Graph) -> Result<(Graph, Vec<Warning>), String> {
    let shared: BTreeSet<&str> = concept
        .nodes()
        .iter()
        .map(|n| n.id.as_str())
        .filter(|id| reply.contains_node(id))
        .collect();
    let missing: Vec<&str> = concept
        .nodes()
        .iter()
        .map(|n| n.id.as_str())
        .filter(|id| !shared.contains(id))
        .collect();
    let novel: Vec<&str> = reply
        .nodes()
        .iter()
        .map(|n| n.id.as_str())
        .filter(|id| !concept.contains_node(id))
        .collect();
    let known = |id: &str| shared.contains(id).then(|| id.to_string());

    // concept id -> reply id
    let mut mapping: HashMap<&str, &str> = shared.iter().map(|id| (*id, *id)).collect();
    let mut warnings = Vec::new();
    let concept_sigs: Vec<(&str, Signature)> = missing
        .iter()
        .map(|m| (*m, signature(concept, m, &known)))
        .collect();
    let reply_sigs: Vec<(&str, Signature)> = novel
        .iter()
        .map(|n| (*n, signature(reply, n, &known)))
        .collect();
    let mut renamed = Vec::new();
    for (n, sig) in &reply_sigs {
        let hits: Vec<&str> = concept_sigs
            .iter()
            .filter(|(_, s)| s == sig)
            .map(|(m, _)| *m)
            .collect();
        let rivals = reply_sigs.iter().filter(|(_, s)| s == sig).count();
        if let ([m], 1) = (hits.as_slice(), rivals) {
            mapping.insert(m, n);
            renamed.push(format!("{n}→{m}"));
        }
    }
    let left_missing: Vec<&str> = missing
        .iter()
        .copied()
        .filter(|m| !mapping.contains_key(m))
        .collect();
    let mut left_novel: Vec<&str> = novel
        .iter()
        .copied()
        .filter(|n| !mapping.values().any(|v| v == n))
        .collect();
    if left_missing.len() == 1 && left_novel.len() == 1 {
        mapping.insert(left_missing[0], left_novel[0]);
        renamed.push(format!("{}→{}", left_novel[0], left_missing[0]));
        left_novel.clear();
    } else if !left_missing.is_empty() && !left_novel.is_empty() {
        return Err(format!(
            "cannot tell which of [{}] replaced [{}]",
            left_novel.join(", "),
            left_missing.join(", ")
        ));
    }
    if !renamed.is_empty() {
        warnings.push(Warning::new(
            WarningCode::ModelRepair,
            format!("realigned renamed ids {}", renamed.join(", ")),
        ));
    }

    let mut out = Graph::new(concept.direction());
    let mut restored = Vec::new();
    for n in concept.nodes() {
        let label = match mapping.get(n.id.as_str()).and_then(|r| reply.node(r)) {
            Some(r) => r.label.clone(),
            None => {
                restored.push(n.id.clone());
                n.label.clone()
            }
        };
        out.add_node(n.id.clone(), label)
            .expect("concept ids are unique");
    }
    for e in concept.edges() {
        out.add_edge(e.source.clone(), e.target.clone(), e.label.clone())
            .expect("concept edges are valid");
    }
    if !restored.is_empty() {
        warnings.push(Warning::new(
            WarningCode::ModelRepair,
            format!(
                "restored nodes missing from the reply: {}",
                restored.join(", ")
            ),
        ));
    }
    if !left_novel.is_empty() {
        warnings.push(Warning::new(
            WarningCode::DroppedElements,
            format!(
                "dropped nodes not in the concept graph: {}",
                left_novel.join(", ")
            ),
        ));
    }
    let reverse: HashMap<&str, &str> = mapping.iter().map(|(c, r)| (*r, *c)).collect();
    let reply_edges: BTreeSet<(String, String, String)> = reply
        .edges()
        .iter()
        .filter_map(|e| {
            Some((
                reverse.get(e.source.as_str())?.to_string(),
                reverse.get(e.target.as_str())?.to_string(),
                e.label.clone(),
            ))
        })
        .collect();
    let concept_edges: BTreeSet<(String, String, String)> = concept
        .edges()
        .iter()
        .map(|e| (e.source.clone(), e.target.clone(), e.label.clone()))
        .collect();
    if reply_edges != concept_edges || reply_edges.len() != reply.edges().len() {
        warnings.push(Warning::new(
            WarningCode::ModelRepair,
            "links reset to the concept graph's links",
        ));
    }
    Ok((out, warnings))
}

/// The part of a goal reply that exists in the scenario graph. `None`
/// when nothing is left.
pub fn goal_subset(scenario: &Graph, reply: &Graph) -> Option<(Graph, Vec<Warning>)> {
    let (sub, warnings) = restrict_to(reply, scenario);
    (!sub.is_empty()).then_some((sub, warnings))
}

/// Puts back learning-goal nodes the UI reply left out and flags a UI
/// graph without anything that looks like a control.
pub fn ui_superset(goal: &Graph, reply: &Graph) -> (Graph, Vec<Warning>) {
    let mut out = reply.clone();
    let mut restored = Vec::new();
    for n in goal.nodes() {
        if !out.contains_node(&n.id) {
            out.add_node(n.id.clone(), n.label.clone())
                .expect("id checked absent");
            restored.push(n.id.clone());
        }
    }
    let mut warnings = Vec::new();
    if !restored.is_empty() {
        warnings.push(Warning::new(
            WarningCode::ModelRepair,
            format!("re-added learning-goal nodes {}", restored.join(", ")),
        ));
    }
    if !has_control(&out) {
        warnings.push(Warning::new(
            WarningCode::NoControls,
            "no node label names a slider, button, toggle, input or control",
        ));
    }
    (out, warnings)
}

pub fn has_control(ui: &Graph) -> bool {
    ui.nodes().iter().any(|n| {
        let label = n.label.to_ascii_lowercase();
        CONTROL_WORDS.iter().any(|w| label.contains(w))
    })
}

/// Normalizes a generated document: the debug flag is switched off and
/// missing instrumentation is reported.
pub fn check_document(doc: &str) -> (String, Vec<Warning>) {
    let (doc, reset) = disable_debug_flag(doc);
    let mut warnings = Vec::new();
    if reset {
        warnings.push(Warning::new(
            WarningCode::DebugFlagReset,
            "window.LOG_DEBUG defaulted to true; set to false",
        ));
    }
    let missing = missing_markers(&doc);
    if !missing.is_empty() {
        warnings.push(Warning::new(
            WarningCode::MissingInstrumentation,
            format!("document lacks {}", missing.join(", ")),
        ));
    }
    (doc, warnings)
}

pub fn count_warning(what: &str, got: usize, expected: usize) -> Option<Warning> {
    (got != expected).then(|| {
        Warning::new(
            WarningCode::CountMismatch,
            format!("expected {expected} {what}, got {got}"),
        )
    })
}

/// Structural rules between a stage and the committed stage above it,
/// checked when a human commits edited content.
pub fn scenario_drift(concept: &Graph, scenario: &Graph) -> Option<Warning> {
    let ids = |g: &Graph| {
        g.nodes()
            .iter()
            .map(|n| n.id.clone())
            .collect::<BTreeSet<_>>()
    };
    let edges = |g: &Graph| {
        g.edges()
            .iter()
            .map(|e| (e.source.clone(), e.target.clone(), e.label.clone()))
            .collect::<BTreeSet<_>>()
    };
    (ids(concept) != ids(scenario) || edges(concept) != edges(scenario)).then(|| {
        Warning::new(
            WarningCode::InvariantDrift,
            "scenario ids or links no longer match the concept graph",
        )
    })
}

pub fn goal_drift(scenario: &Graph, goal: &Graph) -> Option<Warning> {
    (!goal.is_subgraph_of(scenario)).then(|| {
        Warning::new(
            WarningCode::InvariantDrift,
            "learning-goal graph is no longer a subgraph of the scenario graph",
        )
    })
}

pub fn ui_drift(goal: &Graph, ui: &Graph) -> Option<Warning> {
    let lost: Vec<&str> = goal
        .nodes()
        .iter()
        .map(|n| n.id.as_str())
        .filter(|id| !ui.contains_node(id))
        .collect();
    (!lost.is_empty()).then(|| {
        Warning::new(
            WarningCode::InvariantDrift,
            format!(
                "UI graph no longer contains learning-goal nodes {}",
                lost.join(", ")
            ),
        )
    })
}
