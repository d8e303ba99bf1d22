//! Recovery of structured values from chatty model output.
//!
//! Stages, in order: strip a Markdown code fence, parse the remainder as-is,
//! then scan for the first balanced `{...}` or `[...]` span that parses.

use serde_json::Value;

pub fn repair_json(raw: &str) -> Option<Value> {
    let text = strip_code_fence(raw);
    let trimmed = text.trim();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        if let Ok(v) = serde_json::from_str(trimmed) {
            return Some(v);
        }
    }
    let bytes = trimmed.as_bytes();
    for (start, &b) in bytes.iter().enumerate() {
        if b != b'{' && b != b'[' {
            continue;
        }
        if let Some(end) = balanced_end(trimmed, start) {
            if let Ok(v) = serde_json::from_str(&trimmed[start..end]) {
                return Some(v);
            }
        }
    }
    None
}

/// Returns the inner text of the first ``` fence, or the input unchanged.
pub fn strip_code_fence(raw: &str) -> &str {
    let Some(open) = raw.find("```") else { return raw };
    let after = &raw[open + 3..];
    // skip the info string ("json", "JSON", ...) up to the end of the line
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

/// Byte offset one past the bracket closing the one at `start`, honoring
/// JSON string literals and escapes.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let mut stack: Vec<u8> = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in text.as_bytes().iter().enumerate().skip(start) {
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
            b'{' => stack.push(b'}'),
            b'[' => stack.push(b']'),
            b'}' | b']' => {
                if stack.pop() != Some(b) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}
