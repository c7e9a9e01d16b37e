//! Pulls the JSON object out of free-form model output.

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("no JSON object found in response")]
    NoJsonFound,
    #[error("malformed JSON at byte {position}: {message}")]
    MalformedJson { position: usize, message: String },
}

/// Byte range of the body of the first fenced block (```), if any.
fn fenced_region(raw: &str) -> Option<(usize, usize)> {
    let open = raw.find("```")?;
    let body_start = open + raw[open..].find('\n')? + 1;
    let close = raw[body_start..].find("```")? + body_start;
    Some((body_start, close))
}

/// End (exclusive) of the balanced `{...}` region starting at `start`.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + offset + 1);
                }
            }
            _ => {}
        }
    }
    None
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len();
    }
    text.len()
}

fn extract_from(raw: &str, lo: usize, hi: usize) -> Result<Value, ExtractError> {
    let region = &raw[lo..hi];
    let mut first_error: Option<ExtractError> = None;
    let mut search_from = 0;
    while let Some(rel) = region[search_from..].find('{') {
        let start = search_from + rel;
        match balanced_end(region, start) {
            Some(end) => match serde_json::from_str::<Value>(&region[start..end]) {
                Ok(value @ Value::Object(_)) => return Ok(value),
                Ok(_) => {}
                Err(e) => {
                    first_error.get_or_insert(ExtractError::MalformedJson {
                        position: lo + start + byte_offset(&region[start..end], e.line(), e.column()),
                        message: e.to_string(),
                    });
                }
            },
            None => {
                first_error.get_or_insert(ExtractError::MalformedJson {
                    position: lo + start,
                    message: "unbalanced braces".to_string(),
                });
            }
        }
        search_from = start + 1;
    }
    Err(first_error.unwrap_or(ExtractError::NoJsonFound))
}

/// Returns the first parseable top-level JSON object in `raw`.
///
/// The body of a fenced code block is searched first; otherwise the whole
/// text is scanned. Prose before and after the object is ignored.
pub fn extract_json(raw: &str) -> Result<Value, ExtractError> {
    if let Some((lo, hi)) = fenced_region(raw) {
        if let Ok(value) = extract_from(raw, lo, hi) {
            return Ok(value);
        }
    }
    extract_from(raw, 0, raw.len())
}
