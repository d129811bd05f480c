//! Tolerant extraction of JSON from free-form model replies.

use serde_json::Value;

use super::AgentError;

/// Pulls a JSON value out of a model reply.
///
/// Tried in order: the whole reply, the contents of a code fence, then every
/// balanced `{...}` span from left to right. Each candidate is parsed as-is
/// and, failing that, with `//` comments and trailing commas removed.
pub fn extract_json(text: &str) -> Result<Value, AgentError> {
    let trimmed = text.trim();
    if let Some(v) = parse_lenient(trimmed) {
        return Ok(v);
    }
    if let Some(inner) = fenced_block(trimmed) {
        if let Some(v) = parse_lenient(inner.trim()) {
            return Ok(v);
        }
    }
    let bytes = trimmed.as_bytes();
    let mut start = 0;
    while let Some(off) = trimmed[start..].find('{') {
        let open = start + off;
        if let Some(close) = matching_brace(bytes, open) {
            if let Some(v) = parse_lenient(&trimmed[open..=close]) {
                return Ok(v);
            }
        }
        start = open + 1;
    }
    Err(AgentError::MalformedReply { raw: text.to_string() })
}

fn parse_lenient(candidate: &str) -> Option<Value> {
    if candidate.is_empty() {
        return None;
    }
    if let Ok(v) = serde_json::from_str::<Value>(candidate) {
        return Some(v);
    }
    let cleaned = strip_trailing_commas(&strip_line_comments(candidate));
    serde_json::from_str::<Value>(&cleaned).ok()
}

fn fenced_block(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    // skip an optional language tag on the fence line
    let body_start = after.find('\n').map_or(0, |i| i + 1);
    let body = &after[body_start..];
    let close = body.find("```")?;
    Some(&body[..close])
}

/// Index of the `}` closing the object opened at `open`, honouring strings.
fn matching_brace(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
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
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn strip_line_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if in_string {
            out.push(c);
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        if c == '/' && chars.peek() == Some(&'/') {
            for n in chars.by_ref() {
                if n == '\n' {
                    out.push('\n');
                    break;
                }
            }
            continue;
        }
        if c == '"' {
            in_string = true;
        }
        out.push(c);
    }
    out
}

fn strip_trailing_commas(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            out.push(c);
            continue;
        }
        if c == '"' {
            in_string = true;
        }
        if c == ',' {
            let next = chars[i + 1..].iter().find(|n| !n.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}
