//! Pulls structured results out of raw model replies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("no `graph LR`/`graph TD` header in reply")]
    NoGraphFound,
    #[error("option {index} is malformed: `{fragment}`")]
    MalformedOption { index: usize, fragment: String },
    #[error("reply contained no options")]
    EmptyList,
    #[error("reply has unbalanced <START>/<STOP> tags")]
    UnbalancedTags,
    #[error("reply has neither <START>/<STOP> payload nor PASS")]
    NoPayload,
    #[error("reply contains no <svg> element")]
    NoSvgFound,
    #[error("reply contains no HTML document")]
    NoDocumentFound,
    #[error("reply is not a usable JSON value: {0}")]
    InvalidJson(String),
    #[error("type {type_code:?}: schema mismatch (missing {missing:?}, extra {extra:?}) {detail}")]
    SchemaMismatch {
        type_code: Option<u8>,
        missing: Vec<String>,
        extra: Vec<String>,
        detail: String,
    },
    #[error("type code `{0}` is outside 1–8")]
    BadTypeCode(String),
}

impl ExtractError {
    pub(crate) fn schema(type_code: Option<u8>, detail: impl Into<String>) -> Self {
        ExtractError::SchemaMismatch {
            type_code,
            missing: Vec::new(),
            extra: Vec::new(),
            detail: detail.into(),
        }
    }
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

/// Drops Markdown fence lines (with or without a language tag).
pub fn strip_fences(text: &str) -> String {
    text.lines()
        .filter(|l| !is_fence(l))
        .collect::<Vec<_>>()
        .join("\n")
}

fn is_graph_header(line: &str) -> bool {
    matches!(line.trim(), "graph LR" | "graph TD")
}

fn looks_like_graph_line(line: &str) -> bool {
    let t = line.trim();
    t.contains("-->") || (t.contains('[') && t.ends_with(']'))
}

/// Returns the graph block of a reply: from the first header line through
/// the last node or edge line that follows it.
pub fn extract_graph(response: &str) -> Result<String, ExtractError> {
    let lines: Vec<&str> = response.lines().collect();
    let start = lines
        .iter()
        .position(|l| is_graph_header(l))
        .ok_or(ExtractError::NoGraphFound)?;
    // The block ends at a closing fence, if any.
    let stop = lines[start + 1..]
        .iter()
        .position(|l| is_fence(l))
        .map_or(lines.len(), |p| start + 1 + p);
    let last = (start + 1..stop)
        .rev()
        .find(|&i| looks_like_graph_line(lines[i]))
        .unwrap_or(start);
    let mut block: Vec<&str> = lines[start..=last].to_vec();
    block[0] = block[0].trim();
    Ok(block.join("\n"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GoalCategory {
    Descriptive,
    Explanatory,
    Procedural,
}

impl GoalCategory {
    pub fn from_digit(d: char) -> Option<Self> {
        match d {
            '1' => Some(GoalCategory::Descriptive),
            '2' => Some(GoalCategory::Explanatory),
            '3' => Some(GoalCategory::Procedural),
            _ => None,
        }
    }

    pub fn digit(self) -> char {
        match self {
            GoalCategory::Descriptive => '1',
            GoalCategory::Explanatory => '2',
            GoalCategory::Procedural => '3',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionKind {
    Scenario,
    Goal,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OptionItem {
    pub title: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_category: Option<GoalCategory>,
}

impl OptionItem {
    /// The `{{title}} description` wire form the option prompts ask for.
    pub fn to_wire(&self) -> String {
        match self.goal_category {
            Some(c) => format!("{{{{{}}}}} {}. {}", self.title, c.digit(), self.description),
            None => format!("{{{{{}}}}} {}", self.title, self.description),
        }
    }
}

fn short(fragment: &str) -> String {
    let t = fragment.trim();
    match t.char_indices().nth(80) {
        Some((cut, _)) => format!("{}…", &t[..cut]),
        None => t.to_string(),
    }
}

/// Splits a `|`-separated option list and captures each `{{title}}`.
///
/// For goals, the description must open with `1.`, `2.` or `3.`, which maps
/// to the descriptive, explanatory and procedural categories and is removed.
/// Text ahead of the first title is chatter and is dropped.
pub fn parse_options(response: &str, kind: OptionKind) -> Result<Vec<OptionItem>, ExtractError> {
    let response = match response
        .split('|')
        .next()
        .and_then(|first| first.find("{{"))
    {
        Some(open) => &response[open..],
        None => response,
    };
    let mut items = Vec::new();
    for (index, raw) in response
        .split('|')
        .filter(|f| !f.trim().is_empty())
        .enumerate()
    {
        let malformed = || ExtractError::MalformedOption {
            index,
            fragment: short(raw),
        };
        let open = raw.find("{{").ok_or_else(malformed)?;
        let close = raw[open + 2..].find("}}").ok_or_else(malformed)? + open + 2;
        let title = raw[open + 2..close].trim();
        if title.is_empty() {
            return Err(malformed());
        }
        let mut description = format!("{} {}", raw[..open].trim(), raw[close + 2..].trim())
            .trim()
            .trim_start_matches([':', '-', '–', '—'])
            .trim()
            .to_string();
        let goal_category = match kind {
            OptionKind::Scenario => None,
            OptionKind::Goal => {
                let mut chars = description.chars();
                let category = chars.next().and_then(GoalCategory::from_digit);
                match (category, chars.next()) {
                    (Some(c), Some('.')) => {
                        description = chars.as_str().trim().to_string();
                        Some(c)
                    }
                    _ => return Err(malformed()),
                }
            }
        };
        items.push(OptionItem {
            title: title.to_string(),
            description,
            goal_category,
        });
    }
    if items.is_empty() {
        return Err(ExtractError::EmptyList);
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaggedPayload {
    Html(String),
    Pass,
}

pub const START_TAG: &str = "<START>";
pub const STOP_TAG: &str = "<STOP>";

/// Text strictly between the first `<START>` and the following `<STOP>`,
/// or [`TaggedPayload::Pass`] when the whole reply is `PASS`.
pub fn extract_tagged_html(response: &str) -> Result<TaggedPayload, ExtractError> {
    if response.trim() == "PASS" {
        return Ok(TaggedPayload::Pass);
    }
    let start = response.find(START_TAG);
    let stop_any = response.contains(STOP_TAG);
    match start {
        Some(s) => {
            let body = &response[s + START_TAG.len()..];
            match body.find(STOP_TAG) {
                Some(e) => Ok(TaggedPayload::Html(body[..e].to_string())),
                None => Err(ExtractError::UnbalancedTags),
            }
        }
        None if stop_any => Err(ExtractError::UnbalancedTags),
        None => Err(ExtractError::NoPayload),
    }
}

/// Full HTML document from a reply that may or may not use tags or fences.
pub fn extract_document(response: &str) -> Result<String, ExtractError> {
    match extract_tagged_html(response) {
        Ok(TaggedPayload::Html(html)) => return Ok(html.trim().to_string()),
        Err(ExtractError::UnbalancedTags) => return Err(ExtractError::UnbalancedTags),
        _ => {}
    }
    let text = strip_fences(response);
    let lower = text.to_ascii_lowercase();
    let start = lower
        .find("<!doctype")
        .or_else(|| lower.find("<html"))
        .ok_or(ExtractError::NoDocumentFound)?;
    let end = lower
        .rfind("</html>")
        .map_or(text.len(), |e| e + "</html>".len());
    if end <= start {
        return Err(ExtractError::NoDocumentFound);
    }
    Ok(text[start..end].to_string())
}

/// A single `<svg>…</svg>` element with balanced open/close tags.
pub fn extract_svg(response: &str) -> Result<String, ExtractError> {
    let start = response.find("<svg").ok_or(ExtractError::NoSvgFound)?;
    let end = response.rfind("</svg>").ok_or(ExtractError::NoSvgFound)? + "</svg>".len();
    if end <= start {
        return Err(ExtractError::NoSvgFound);
    }
    let svg = &response[start..end];
    let opens = svg.match_indices("<svg").filter(|(i, _)| {
        svg[i + 4..].starts_with(|c: char| c.is_whitespace() || c == '>' || c == '/')
    });
    if opens.count() != svg.matches("</svg>").count() {
        return Err(ExtractError::NoSvgFound);
    }
    Ok(svg.to_string())
}
