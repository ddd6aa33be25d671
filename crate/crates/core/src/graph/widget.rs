use serde::{Deserialize, Serialize};

use super::{is_valid_edge_label, is_valid_node_label, Graph, GraphError};

/// The six manual refinement widgets, expressed as pure graph edits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "widget", rename_all_fields = "camelCase")]
pub enum WidgetAction {
    AddNode {
        label: String,
    },
    AddLink {
        source: String,
        target: String,
        label: String,
    },
    RemoveNode {
        id: String,
    },
    RemoveLink {
        source: String,
        target: String,
        label: String,
    },
    EditNodeLabel {
        id: String,
        new_label: String,
    },
    EditLinkLabel {
        source: String,
        target: String,
        old_label: String,
        new_label: String,
    },
}

impl WidgetAction {
    pub fn add_node(label: impl Into<String>) -> Self {
        Self::AddNode {
            label: label.into(),
        }
    }

    pub fn add_link(
        source: impl Into<String>,
        target: impl Into<String>,
        label: impl Into<String>,
    ) -> Self {
        Self::AddLink {
            source: source.into(),
            target: target.into(),
            label: label.into(),
        }
    }

    pub fn remove_node(id: impl Into<String>) -> Self {
        Self::RemoveNode { id: id.into() }
    }

    pub fn remove_link(
        source: impl Into<String>,
        target: impl Into<String>,
        label: impl Into<String>,
    ) -> Self {
        Self::RemoveLink {
            source: source.into(),
            target: target.into(),
            label: label.into(),
        }
    }

    pub fn edit_node_label(id: impl Into<String>, new_label: impl Into<String>) -> Self {
        Self::EditNodeLabel {
            id: id.into(),
            new_label: new_label.into(),
        }
    }

    pub fn edit_link_label(
        source: impl Into<String>,
        target: impl Into<String>,
        old_label: impl Into<String>,
        new_label: impl Into<String>,
    ) -> Self {
        Self::EditLinkLabel {
            source: source.into(),
            target: target.into(),
            old_label: old_label.into(),
            new_label: new_label.into(),
        }
    }
}

/// CamelCase slug of a label: alphanumeric runs, each capitalized, joined.
pub fn slug(label: &str) -> String {
    let out: String = label
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut chars = w.chars();
            let first = chars.next().expect("non-empty word");
            first.to_uppercase().chain(chars).collect::<String>()
        })
        .collect();
    if out.is_empty() {
        "Node".to_string()
    } else {
        out
    }
}

/// Fresh id for a node labelled `label`: the slug, or `slug_2`, `slug_3`, …
/// whichever is the first one not already taken.
pub fn mint_node_id(g: &Graph, label: &str) -> String {
    let base = slug(label);
    if !g.contains_node(&base) {
        return base;
    }
    (2..)
        .map(|k| format!("{base}_{k}"))
        .find(|id| !g.contains_node(id))
        .expect("unbounded suffix search")
}

/// Applies one widget edit, returning a new graph. The input is never
/// modified; on error nothing changes.
pub fn apply_widget(g: &Graph, action: &WidgetAction) -> Result<Graph, GraphError> {
    let mut out = g.clone();
    match action {
        WidgetAction::AddNode { label } => {
            if !is_valid_node_label(label) {
                return Err(GraphError::InvalidLabel(label.clone()));
            }
            let id = mint_node_id(&out, label);
            out.add_node(id, label.clone())?;
        }
        WidgetAction::AddLink {
            source,
            target,
            label,
        } => {
            for end in [source, target] {
                if !out.contains_node(end) {
                    return Err(GraphError::UnknownNode(end.clone()));
                }
            }
            out.add_edge(source.clone(), target.clone(), label.clone())?;
        }
        WidgetAction::RemoveNode { id } => {
            out.remove_node(id)?;
        }
        WidgetAction::RemoveLink {
            source,
            target,
            label,
        } => {
            out.remove_edge(source, target, label)?;
        }
        WidgetAction::EditNodeLabel { id, new_label } => {
            if !is_valid_node_label(new_label) {
                return Err(GraphError::InvalidLabel(new_label.clone()));
            }
            let node = out
                .node_mut(id)
                .ok_or_else(|| GraphError::UnknownNode(id.clone()))?;
            node.label = new_label.clone();
        }
        WidgetAction::EditLinkLabel {
            source,
            target,
            old_label,
            new_label,
        } => {
            if !out.contains_edge(source, target, old_label) {
                return Err(GraphError::UnknownLink {
                    from: source.clone(),
                    to: target.clone(),
                    label: old_label.clone(),
                });
            }
            if new_label != old_label {
                if !is_valid_edge_label(new_label) {
                    return Err(GraphError::InvalidLabel(new_label.clone()));
                }
                if out.contains_edge(source, target, new_label) {
                    return Err(GraphError::DuplicateLink {
                        from: source.clone(),
                        to: target.clone(),
                        label: new_label.clone(),
                    });
                }
                out.edge_mut(source, target, old_label)
                    .expect("checked above")
                    .label = new_label.clone();
            }
        }
    }
    Ok(out)
}
