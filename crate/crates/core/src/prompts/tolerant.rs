//! Lenient JSON ingestion for model replies: fences, surrounding prose,
//! unquoted keys, single quotes, comments and trailing commas are accepted.
//! Shape checks happen afterwards on the parsed value.

use serde_json::{Map, Value};

use super::extract::{strip_fences, ExtractError};

/// Byte range of the first balanced `open … close` block, skipping over
/// string literals and comments.
fn balanced_span(text: &str, open: u8, close: u8) -> Option<(usize, usize)> {
    let bytes = text.as_bytes();
    let start = bytes.iter().position(|&b| b == open)?;
    let mut depth = 0usize;
    let mut i = start;
    while i < bytes.len() {
        match bytes[i] {
            q @ (b'"' | b'\'' | b'`') => {
                i += 1;
                while i < bytes.len() && bytes[i] != q {
                    if bytes[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                i += 2;
                while i + 1 < bytes.len() && !(bytes[i] == b'*' && bytes[i + 1] == b'/') {
                    i += 1;
                }
                i += 1;
            }
            b if b == open => depth += 1,
            b if b == close => {
                depth -= 1;
                if depth == 0 {
                    return Some((start, i + 1));
                }
            }
            _ => {}
        }
        i += 1;
    }
    None
}

fn parse_json5(text: &str) -> Result<Value, ExtractError> {
    json5::from_str::<Value>(text).map_err(|e| ExtractError::InvalidJson(e.to_string()))
}

/// First JSON object in a reply.
pub fn parse_object(response: &str) -> Result<Map<String, Value>, ExtractError> {
    let text = strip_fences(response);
    let (s, e) = balanced_span(&text, b'{', b'}')
        .ok_or_else(|| ExtractError::InvalidJson("no `{` … `}` object found".into()))?;
    match parse_json5(&text[s..e])? {
        Value::Object(map) => Ok(map),
        other => Err(ExtractError::InvalidJson(format!(
            "expected object, got {other}"
        ))),
    }
}

/// Like [`parse_object`] but also accepts a bare sequence of `"key": value`
/// members with no enclosing braces, which is how some prompts show their
/// expected output.
pub fn parse_object_or_members(response: &str) -> Result<Map<String, Value>, ExtractError> {
    let text = strip_fences(response);
    let trimmed = text.trim();
    if trimmed.starts_with('{') {
        if let Ok(map) = parse_object(trimmed) {
            return Ok(map);
        }
    }
    if let Ok(Value::Object(map)) = parse_json5(&format!("{{\n{trimmed}\n}}")) {
        return Ok(map);
    }
    parse_object(trimmed)
}

/// First JSON array in a reply.
pub fn parse_array(response: &str) -> Result<Vec<Value>, ExtractError> {
    let text = strip_fences(response);
    let (s, e) = balanced_span(&text, b'[', b']')
        .ok_or_else(|| ExtractError::InvalidJson("no `[` … `]` array found".into()))?;
    match parse_json5(&text[s..e])? {
        Value::Array(items) => Ok(items),
        other => Err(ExtractError::InvalidJson(format!(
            "expected array, got {other}"
        ))),
    }
}
