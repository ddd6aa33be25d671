use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::prompts::tolerant::{parse_array, parse_object_or_members};
use crate::prompts::{extract_tagged_html, strip_fences, ExtractError, TaggedPayload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionType {
    Click,
    SetValue,
    Toggle,
    VerifyContent,
}

impl ActionType {
    fn parse(s: &str) -> Option<Self> {
        match s
            .trim()
            .to_ascii_lowercase()
            .replace(['-', ' '], "_")
            .as_str()
        {
            "click" => Some(ActionType::Click),
            "set_value" | "setvalue" => Some(ActionType::SetValue),
            "toggle" => Some(ActionType::Toggle),
            "verify_content" | "verifycontent" => Some(ActionType::VerifyContent),
            _ => None,
        }
    }
}

/// One structured test case in canonical form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestCase {
    pub ui_element_id: String,
    pub action_type: ActionType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_value: Option<Value>,
    pub description: String,
    pub expected_outcome: String,
    #[serde(rename = "isUIVerification")]
    pub is_ui_verification: bool,
}

impl TestCase {
    /// `actionValue` rendered as the text a form control would hold.
    pub fn value_text(&self) -> Option<String> {
        self.action_value.as_ref().map(|v| match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseError {
    pub index: usize,
    pub error: ExtractError,
}

/// Canonical key followed by accepted aliases.
const KEYS: [(&str, &[&str]); 6] = [
    ("uiElementId", &["ID", "id", "elementId"]),
    ("actionType", &["action"]),
    ("actionValue", &["value"]),
    ("description", &[]),
    ("expectedOutcome", &["expected"]),
    ("isUIVerification", &["isUiVerification"]),
];

fn mismatch(missing: Vec<String>, extra: Vec<String>, detail: impl Into<String>) -> ExtractError {
    ExtractError::SchemaMismatch {
        type_code: None,
        missing,
        extra,
        detail: detail.into(),
    }
}

/// Normalizes one test-case object, accepting both key spellings.
pub fn parse_test_case(obj: &Map<String, Value>) -> Result<TestCase, ExtractError> {
    let mut canon: Map<String, Value> = Map::new();
    let mut extra = Vec::new();
    for (k, v) in obj {
        match KEYS
            .iter()
            .find(|(c, aliases)| c == k || aliases.contains(&k.as_str()))
        {
            Some((c, _)) => {
                canon.insert(c.to_string(), v.clone());
            }
            None => extra.push(k.clone()),
        }
    }
    if !extra.is_empty() {
        return Err(mismatch(Vec::new(), extra, "unknown keys"));
    }
    let missing: Vec<String> = [
        "uiElementId",
        "actionType",
        "description",
        "expectedOutcome",
        "isUIVerification",
    ]
    .iter()
    .filter(|k| canon.get(**k).is_none_or(Value::is_null))
    .map(|k| k.to_string())
    .collect();
    if !missing.is_empty() {
        return Err(mismatch(missing, Vec::new(), ""));
    }
    let text = |k: &str| match &canon[k] {
        Value::String(s) => Ok(s.clone()),
        other => Err(mismatch(
            Vec::new(),
            Vec::new(),
            format!("`{k}` must be a string, got {other}"),
        )),
    };
    let ui_element_id = text("uiElementId")?;
    if ui_element_id.trim().is_empty() {
        return Err(mismatch(Vec::new(), Vec::new(), "`uiElementId` is empty"));
    }
    let raw_action = text("actionType")?;
    let action_type = ActionType::parse(&raw_action).ok_or_else(|| {
        mismatch(
            Vec::new(),
            Vec::new(),
            format!("unknown action `{raw_action}`"),
        )
    })?;
    let is_ui_verification = match &canon["isUIVerification"] {
        Value::Bool(b) => *b,
        Value::String(s) if s.eq_ignore_ascii_case("true") => true,
        Value::String(s) if s.eq_ignore_ascii_case("false") => false,
        other => {
            return Err(mismatch(
                Vec::new(),
                Vec::new(),
                format!("`isUIVerification` must be a boolean, got {other}"),
            ))
        }
    };
    let value = canon.get("actionValue").filter(|v| !v.is_null()).cloned();
    let action_value = match (action_type, value) {
        (ActionType::SetValue, None) => {
            return Err(mismatch(
                vec!["actionValue".into()],
                Vec::new(),
                "set_value needs a value",
            ))
        }
        (
            ActionType::SetValue,
            Some(v @ (Value::String(_) | Value::Number(_) | Value::Bool(_))),
        ) => Some(v),
        (ActionType::SetValue, Some(other)) => {
            return Err(mismatch(
                Vec::new(),
                Vec::new(),
                format!("`actionValue` must be a scalar, got {other}"),
            ))
        }
        // A value on any other action carries no meaning and is dropped.
        (_, _) => None,
    };
    Ok(TestCase {
        ui_element_id,
        action_type,
        action_value,
        description: text("description")?,
        expected_outcome: text("expectedOutcome")?,
        is_ui_verification,
    })
}

/// Parses a test-generation reply. The array is read from between the
/// `<START>`/`<STOP>` tags when present, otherwise from the whole reply.
/// A single object, or bare members without braces, count as one case.
/// Invalid elements are reported by index; valid ones are kept.
pub fn parse_test_cases(response: &str) -> Result<(Vec<TestCase>, Vec<CaseError>), ExtractError> {
    let body = match extract_tagged_html(response) {
        Ok(TaggedPayload::Html(inner)) => inner,
        Err(ExtractError::UnbalancedTags) => return Err(ExtractError::UnbalancedTags),
        _ => response.to_string(),
    };
    let text = strip_fences(&body);
    let first_line = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with("//"))
        .unwrap_or("");
    let array_first = match (text.find('['), text.find('{')) {
        (Some(a), Some(o)) => a < o,
        (Some(_), None) => true,
        _ => false,
    };
    let items = if first_line.starts_with('"') || !array_first {
        vec![Value::Object(parse_object_or_members(&text)?)]
    } else {
        parse_array(&text)?
    };
    let mut cases = Vec::new();
    let mut errors = Vec::new();
    for (index, item) in items.iter().enumerate() {
        let parsed = match item {
            Value::Object(obj) => parse_test_case(obj),
            other => Err(mismatch(
                Vec::new(),
                Vec::new(),
                format!("expected object, got {other}"),
            )),
        };
        match parsed {
            Ok(c) => cases.push(c),
            Err(error) => errors.push(CaseError { index, error }),
        }
    }
    Ok((cases, errors))
}
