use std::collections::BTreeSet;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Map, Value};

use super::extract::ExtractError;
use super::tolerant::parse_object;

/// Pixel rectangle `[x, y, w, h]` on a simulation screenshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BoundingBox {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        Self { x, y, w, h }
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BoundingBox {
    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h]
            .iter()
            .all(|v| v.is_finite())
            && self.w > 0.0
            && self.h > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SuggestionPayload {
    AddNode {
        label: String,
    },
    AddEdge {
        source: String,
        target: String,
        label: String,
    },
    EditAssumptions {
        node: String,
        assumptions: Vec<String>,
    },
    Redraw {
        bbox: BoundingBox,
        svg: String,
    },
    EditNode {
        node: String,
        old_label: String,
        new_label: String,
    },
    EditEdge {
        source: String,
        target: String,
        old_label: String,
        new_label: String,
    },
    RemoveNode {
        node: String,
    },
    RemoveEdge {
        source: String,
        target: String,
        label: String,
    },
}

/// Wire field names for each type code, excluding `type` and `message`.
pub fn payload_fields(type_code: u8) -> Option<&'static [&'static str]> {
    Some(match type_code {
        1 => &["label"],
        2 => &["source", "target", "label"],
        3 => &["node", "assumptions"],
        4 => &["box", "svg"],
        5 => &["node", "oldLabel", "newLabel"],
        6 => &["source", "target", "oldLabel", "newLabel"],
        7 => &["node"],
        8 => &["source", "target", "label"],
        _ => return None,
    })
}

impl SuggestionPayload {
    pub fn type_code(&self) -> u8 {
        match self {
            SuggestionPayload::AddNode { .. } => 1,
            SuggestionPayload::AddEdge { .. } => 2,
            SuggestionPayload::EditAssumptions { .. } => 3,
            SuggestionPayload::Redraw { .. } => 4,
            SuggestionPayload::EditNode { .. } => 5,
            SuggestionPayload::EditEdge { .. } => 6,
            SuggestionPayload::RemoveNode { .. } => 7,
            SuggestionPayload::RemoveEdge { .. } => 8,
        }
    }

    fn to_fields(&self) -> Map<String, Value> {
        let v = match self {
            SuggestionPayload::AddNode { label } => json!({ "label": label }),
            SuggestionPayload::AddEdge {
                source,
                target,
                label,
            }
            | SuggestionPayload::RemoveEdge {
                source,
                target,
                label,
            } => {
                json!({ "source": source, "target": target, "label": label })
            }
            SuggestionPayload::EditAssumptions { node, assumptions } => {
                json!({ "node": node, "assumptions": assumptions })
            }
            SuggestionPayload::Redraw { bbox, svg } => {
                json!({ "box": <[f64; 4]>::from(*bbox), "svg": svg })
            }
            SuggestionPayload::EditNode {
                node,
                old_label,
                new_label,
            } => {
                json!({ "node": node, "oldLabel": old_label, "newLabel": new_label })
            }
            SuggestionPayload::EditEdge {
                source,
                target,
                old_label,
                new_label,
            } => {
                json!({ "source": source, "target": target, "oldLabel": old_label, "newLabel": new_label })
            }
            SuggestionPayload::RemoveNode { node } => json!({ "node": node }),
        };
        match v {
            Value::Object(m) => m,
            _ => unreachable!("payloads are objects"),
        }
    }
}

/// One typed fix proposed by the model for a complaint.
#[derive(Debug, Clone, PartialEq)]
pub struct WidgetSuggestion {
    pub message: String,
    pub payload: SuggestionPayload,
}

impl WidgetSuggestion {
    pub fn type_code(&self) -> u8 {
        self.payload.type_code()
    }

    /// Strict JSON form: `{"type": n, "message": …, <payload fields>}`.
    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        map.insert("type".into(), json!(self.type_code()));
        map.insert("message".into(), json!(self.message));
        map.extend(self.payload.to_fields());
        Value::Object(map)
    }

    pub fn from_json(value: &Value) -> Result<Self, ExtractError> {
        match value {
            Value::Object(map) => from_map(map),
            _ => Err(ExtractError::schema(
                None,
                "suggestion must be a JSON object",
            )),
        }
    }
}

impl Serialize for WidgetSuggestion {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for WidgetSuggestion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        WidgetSuggestion::from_json(&v).map_err(serde::de::Error::custom)
    }
}

fn type_code_of(map: &Map<String, Value>) -> Result<u8, ExtractError> {
    let raw = map
        .get("type")
        .ok_or_else(|| ExtractError::SchemaMismatch {
            type_code: None,
            missing: vec!["type".into()],
            extra: Vec::new(),
            detail: String::new(),
        })?;
    let n = match raw {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    };
    match n {
        Some(n) if n.fract() == 0.0 && (1.0..=8.0).contains(&n) => Ok(n as u8),
        _ => Err(ExtractError::BadTypeCode(raw.to_string())),
    }
}

fn text(map: &Map<String, Value>, code: u8, key: &str) -> Result<String, ExtractError> {
    match map.get(key) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        _ => Err(ExtractError::schema(
            Some(code),
            format!("`{key}` must be a non-empty string"),
        )),
    }
}

fn from_map(map: &Map<String, Value>) -> Result<WidgetSuggestion, ExtractError> {
    let code = type_code_of(map)?;
    let expected: BTreeSet<&str> = payload_fields(code)
        .expect("validated code")
        .iter()
        .copied()
        .chain(["type", "message"])
        .collect();
    let present: BTreeSet<&str> = map.keys().map(String::as_str).collect();
    let missing: Vec<String> = expected
        .difference(&present)
        .map(|s| s.to_string())
        .collect();
    let extra: Vec<String> = present
        .difference(&expected)
        .map(|s| s.to_string())
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(ExtractError::SchemaMismatch {
            type_code: Some(code),
            missing,
            extra,
            detail: String::new(),
        });
    }
    let t = |key: &str| text(map, code, key);
    let payload = match code {
        1 => SuggestionPayload::AddNode { label: t("label")? },
        2 => SuggestionPayload::AddEdge {
            source: t("source")?,
            target: t("target")?,
            label: t("label")?,
        },
        3 => {
            let assumptions = match &map["assumptions"] {
                Value::Array(items) => items
                    .iter()
                    .map(|v| v.as_str().map(str::to_string))
                    .collect::<Option<Vec<_>>>(),
                _ => None,
            }
            .ok_or_else(|| {
                ExtractError::schema(Some(3), "`assumptions` must be a list of strings")
            })?;
            SuggestionPayload::EditAssumptions {
                node: t("node")?,
                assumptions,
            }
        }
        4 => {
            let bbox = serde_json::from_value::<[f64; 4]>(map["box"].clone())
                .map(BoundingBox::from)
                .ok()
                .filter(BoundingBox::is_valid)
                .ok_or_else(|| {
                    ExtractError::schema(Some(4), "`box` must be [x, y, w, h] with w, h > 0")
                })?;
            SuggestionPayload::Redraw {
                bbox,
                svg: t("svg")?,
            }
        }
        5 => SuggestionPayload::EditNode {
            node: t("node")?,
            old_label: t("oldLabel")?,
            new_label: t("newLabel")?,
        },
        6 => SuggestionPayload::EditEdge {
            source: t("source")?,
            target: t("target")?,
            old_label: t("oldLabel")?,
            new_label: t("newLabel")?,
        },
        7 => SuggestionPayload::RemoveNode { node: t("node")? },
        8 => SuggestionPayload::RemoveEdge {
            source: t("source")?,
            target: t("target")?,
            label: t("label")?,
        },
        _ => unreachable!(),
    };
    let message = match map.get("message") {
        Some(Value::String(s)) => s.clone(),
        _ => {
            return Err(ExtractError::schema(
                Some(code),
                "`message` must be a string",
            ))
        }
    };
    Ok(WidgetSuggestion { message, payload })
}

/// Tolerant parse of a populate-prompt reply followed by strict validation
/// of the type code and the field set for that code.
pub fn parse_widget_json(response: &str) -> Result<WidgetSuggestion, ExtractError> {
    from_map(&parse_object(response)?)
}
