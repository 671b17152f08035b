//! Recovery of JSON verdicts from free-form model output.
//!
//! The grading prompts put the answer object after free-form analysis, so
//! extraction scans for the LAST balanced top-level object that parses. The
//! repair set is bounded and enumerated: code fences are ignored by
//! construction, trailing commas are dropped, raw newlines inside strings are
//! escaped, and full-width quotes/colons/commas are normalized as a final
//! fallback. Anything else fails loudly with the raw text attached.

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("no recoverable JSON object in response ({} chars)", raw.chars().count())]
    NoJsonObject { raw: String },
}

/// Extracts the last recoverable top-level JSON object from `text`.
pub fn extract_json(text: &str) -> Result<Value, ExtractError> {
    for candidate in candidates(text).into_iter().rev() {
        if let Some(value) = parse_with_repairs(candidate) {
            return Ok(value);
        }
    }
    Err(ExtractError::NoJsonObject {
        raw: text.to_string(),
    })
}

/// Balanced `{...}` spans at the top level (not nested inside another span).
/// The scan is string-aware so braces inside JSON strings do not count.
fn candidates(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(end) = balanced_end(bytes, i) {
                spans.push(&text[i..end]);
                i = end;
                continue;
            }
        }
        i += 1;
    }
    spans
}

/// Returns the exclusive end index of the balanced object starting at `start`.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
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

fn parse_with_repairs(candidate: &str) -> Option<Value> {
    let attempts = [
        candidate.to_string(),
        repair_light(candidate),
        repair_light(&normalize_fullwidth(candidate)),
    ];
    for attempt in attempts {
        if let Ok(value) = serde_json::from_str::<Value>(&attempt) {
            if value.is_object() {
                return Some(value);
            }
        }
    }
    None
}

/// Drops trailing commas before `}`/`]` and escapes raw newlines inside
/// strings. Both passes are string-aware.
fn repair_light(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if in_string {
            if escaped {
                escaped = false;
                out.push(c);
            } else if c == '\\' {
                escaped = true;
                out.push(c);
            } else if c == '"' {
                in_string = false;
                out.push(c);
            } else if c == '\n' {
                out.push_str("\\n");
            } else if c == '\r' {
                out.push_str("\\r");
            } else {
                out.push(c);
            }
            i += 1;
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                out.push(c);
                i += 1;
            }
            ',' => {
                let mut j = i + 1;
                while j < chars.len() && chars[j].is_whitespace() {
                    j += 1;
                }
                if j < chars.len() && (chars[j] == '}' || chars[j] == ']') {
                    i += 1; // drop the trailing comma
                } else {
                    out.push(c);
                    i += 1;
                }
            }
            _ => {
                out.push(c);
                i += 1;
            }
        }
    }
    out
}

/// Last-resort normalization of full-width punctuation. Runs only once the
/// stricter attempts have failed, so well-formed content is never rewritten.
fn normalize_fullwidth(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '＂' | '“' | '”' => '"',
            '：' => ':',
            '，' => ',',
            other => other,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn last_object_after_analysis() {
        let value = extract_json("analysis...\n{\"score\": 7}").unwrap();
        assert_eq!(value, json!({"score": 7}));
    }

    #[test]
    fn fenced_object() {
        let value = extract_json("```json\n{\"score\": 1}\n```").unwrap();
        assert_eq!(value, json!({"score": 1}));
    }

    #[test]
    fn picks_last_of_multiple_objects() {
        let value = extract_json("{\"a\":1} junk {\"score\":0}").unwrap();
        assert_eq!(value, json!({"score": 0}));
    }

    #[test]
    fn skips_trailing_garbage_object() {
        // The last balanced span does not parse; the previous one does.
        let value = extract_json("{\"score\": 3} tail {oops: }").unwrap();
        assert_eq!(value, json!({"score": 3}));
    }

    #[test]
    fn repairs_trailing_commas() {
        let value = extract_json("{\"a\": 1, \"b\": [1, 2,], }").unwrap();
        assert_eq!(value, json!({"a": 1, "b": [1, 2]}));
    }

    #[test]
    fn repairs_raw_newlines_in_strings() {
        let value = extract_json("{\"text\": \"line one\nline two\"}").unwrap();
        assert_eq!(value, json!({"text": "line one\nline two"}));
    }

    #[test]
    fn repairs_fullwidth_punctuation() {
        let value = extract_json("{“score”： 5， “ok”： 1}").unwrap();
        assert_eq!(value, json!({"score": 5, "ok": 1}));
    }

    #[test]
    fn fullwidth_quotes_in_values_survive_when_json_is_valid() {
        let value = extract_json("{\"note\": \"他说“好”\"}").unwrap();
        assert_eq!(value, json!({"note": "他说“好”"}));
    }

    #[test]
    fn braces_inside_strings_do_not_split_objects() {
        let value = extract_json("prose {\"expr\": \"f(x) = {x}\", \"score\": 2}").unwrap();
        assert_eq!(value, json!({"expr": "f(x) = {x}", "score": 2}));
    }

    #[test]
    fn hopeless_inputs_fail() {
        assert!(matches!(
            extract_json("no json here at all"),
            Err(ExtractError::NoJsonObject { .. })
        ));
        assert!(extract_json("{\"unclosed\": ").is_err());
        assert!(extract_json("[1, 2, 3]").is_err()); // arrays are not verdicts
    }

    #[test]
    fn idempotent_on_own_output() {
        let inputs = [
            "analysis {\"a\": 1, } then {\"score\": 9,}",
            "```json\n{\"x\": \"a\nb\"}\n```",
        ];
        for input in inputs {
            let first = extract_json(input).unwrap();
            let again = extract_json(&serde_json::to_string(&first).unwrap()).unwrap();
            assert_eq!(first, again);
        }
    }
}
