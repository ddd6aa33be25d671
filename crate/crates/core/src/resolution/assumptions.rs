use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::graph::Graph;
use crate::prompts::tolerant::parse_object;
use crate::prompts::ExtractError;
use crate::warning::{Warning, WarningCode};

/// Implementation details the document commits to, per UI-graph node.
/// Keys are node labels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssumptionSheet {
    pub entries: BTreeMap<String, Vec<String>>,
}

/// Sheet key for every node, in graph order. A label shared by several
/// nodes gets `#2`, `#3`, … on its later occurrences.
pub fn node_keys(ui: &Graph) -> Vec<(String, String)> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for n in ui.nodes() {
        let mut key = n.label.clone();
        let mut k = 2;
        while keys.iter().any(|(existing, _)| existing == &key) {
            key = format!("{} #{k}", n.label);
            k += 1;
        }
        keys.push((key, n.id.clone()));
    }
    keys
}

/// Sheet key for a node named by key, label or id.
pub fn resolve_node(ui: &Graph, name: &str) -> Option<String> {
    let keys = node_keys(ui);
    let name = name.trim();
    keys.iter()
        .find(|(k, _)| k == name)
        .or_else(|| keys.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)))
        .or_else(|| keys.iter().find(|(_, id)| id == name))
        .map(|(k, _)| k.clone())
}

fn as_list(key: &str, v: &Value) -> Result<Vec<String>, ExtractError> {
    let items: Vec<String> = match v {
        Value::Array(items) => items
            .iter()
            .map(|i| match i {
                Value::String(s) => s.trim().to_string(),
                other => other.to_string(),
            })
            .filter(|s| !s.is_empty())
            .collect(),
        Value::String(s) if !s.trim().is_empty() => vec![s.trim().to_string()],
        Value::String(_) => Vec::new(),
        other => {
            return Err(ExtractError::schema(
                Some(3),
                format!("assumptions for `{key}` must be a list, got {other}"),
            ))
        }
    };
    if items.is_empty() {
        return Err(ExtractError::schema(
            Some(3),
            format!("assumption list for `{key}` is empty"),
        ));
    }
    Ok(items)
}

pub(crate) fn parse_sheet(
    reply: &str,
    ui: &Graph,
) -> Result<(AssumptionSheet, Vec<Warning>), ExtractError> {
    let obj = parse_object(reply)?;
    let keys = node_keys(ui);
    let mut sheet = AssumptionSheet::default();
    let mut by_id = Vec::new();
    let mut unknown = Vec::new();
    for (name, value) in &obj {
        let key = match resolve_node(ui, name) {
            Some(k) => k,
            None => {
                unknown.push(name.clone());
                continue;
            }
        };
        if keys.iter().any(|(k, id)| id == name && k != name) {
            by_id.push(name.clone());
        }
        sheet.entries.insert(key.clone(), as_list(&key, value)?);
    }
    let missing: Vec<&str> = keys
        .iter()
        .map(|(k, _)| k.as_str())
        .filter(|k| !sheet.entries.contains_key(*k))
        .collect();
    let mut warnings = Vec::new();
    if !by_id.is_empty() {
        warnings.push(Warning::new(
            WarningCode::MissingNodes,
            format!("reply keyed {} by id; matched to labels", by_id.join(", ")),
        ));
    }
    if !missing.is_empty() {
        warnings.push(Warning::new(
            WarningCode::MissingNodes,
            format!("no assumptions for {}", missing.join(", ")),
        ));
    }
    if !unknown.is_empty() {
        warnings.push(Warning::new(
            WarningCode::DroppedElements,
            format!("ignored entries for unknown nodes {}", unknown.join(", ")),
        ));
    }
    Ok((sheet, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_graph;

    fn ui() -> Graph {
        parse_graph(
            "graph LR\n    W[Weight Slider]\n    B[Balloon]\n    B2[Balloon]\n    W -->|sets| B",
        )
        .unwrap()
    }

    #[test]
    fn duplicate_labels_are_suffixed() {
        let keys: Vec<String> = node_keys(&ui()).into_iter().map(|(k, _)| k).collect();
        assert_eq!(keys, ["Weight Slider", "Balloon", "Balloon #2"]);
    }

    #[test]
    fn id_keys_are_matched_with_a_warning() {
        let reply = r#"{"W": ["Range 0 to 100 kg"], "Balloon": ["Drawn as an ellipse"]}"#;
        let (sheet, warnings) = parse_sheet(reply, &ui()).unwrap();
        assert_eq!(sheet.entries["Weight Slider"], ["Range 0 to 100 kg"]);
        assert!(warnings.iter().all(|w| w.code == WarningCode::MissingNodes));
        assert_eq!(warnings.len(), 2);
    }

    #[test]
    fn empty_list_is_a_schema_error() {
        let reply = r#"{"Weight Slider": []}"#;
        assert!(matches!(
            parse_sheet(reply, &ui()),
            Err(ExtractError::SchemaMismatch { .. })
        ));
    }
}
