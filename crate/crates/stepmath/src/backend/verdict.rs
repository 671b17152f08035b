//! Parsing of grading verdict objects.
//!
//! The agent verdict keys each reasoning step as `"（N）step text": 0/1`
//! (either parenthesis width), with the final grade under `最终得分` and the
//! chain listing under `错误链`. English-prompt runs may use the
//! `final_score`/`error_chains` aliases. A verdict with no step keys is only
//! accepted in the bypass form, where the grade must be 0 or 10.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

const FINAL_SCORE_KEYS: [&str; 2] = ["最终得分", "final_score"];
const CHAIN_KEYS: [&str; 2] = ["错误链", "error_chains"];

#[derive(Debug, Error, PartialEq)]
pub enum VerdictError {
    #[error("verdict is not a JSON object")]
    NotAnObject,
    #[error("no step keys and no bypass form in verdict")]
    NoStepKeys,
    #[error("step key '{key}' has a non-0/1 score")]
    InvalidStepScore { key: String },
    #[error("duplicate step index {index}")]
    DuplicateIndex { index: usize },
    #[error("step indices not contiguous from 1: missing {missing:?}")]
    MissingIndices { missing: Vec<usize> },
    #[error("step index 0 is invalid; steps are 1-based")]
    ZeroStepIndex,
    #[error("final score {got} outside 0..=10")]
    FinalScoreOutOfRange { got: i64 },
    #[error("bypass verdict must grade 0 or 10 (got {got})")]
    BypassScoreInvalid { got: i64 },
    #[error("'{key}' is not an integer score")]
    NonIntegerScore { key: String },
    #[error("'{key}' is not a string")]
    NonStringChain { key: String },
    #[error("missing '{key}' field")]
    MissingField { key: String },
    #[error("score {got} outside 0..={max}")]
    ScoreOutOfRange { got: i64, max: u8 },
}

/// One parsed step from an agent verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictStep {
    pub index: usize,
    pub text: String,
    pub score: u8,
}

/// A parsed agent verdict: segmented steps with 0/1 scores, the model's own
/// reported grade, and the raw chain listing.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentVerdict {
    pub steps: Vec<VerdictStep>,
    pub reported_final: Option<u8>,
    pub chain_text: Option<String>,
    /// True for the difficulty-module short-circuit: answer-only verdicts
    /// carrying just a 0-or-10 grade and an empty chain.
    pub bypass: bool,
}

/// Parses the step-wise agent verdict, accepting both parenthesis widths.
pub fn parse_agent_verdict(value: &Value) -> Result<AgentVerdict, VerdictError> {
    let object = value.as_object().ok_or(VerdictError::NotAnObject)?;

    let mut steps: Vec<VerdictStep> = Vec::new();
    for (key, entry) in object {
        let Some((index, text)) = split_step_key(key) else {
            continue;
        };
        if index == 0 {
            return Err(VerdictError::ZeroStepIndex);
        }
        let score = coerce_binary(entry).ok_or_else(|| VerdictError::InvalidStepScore {
            key: key.clone(),
        })?;
        if steps.iter().any(|s| s.index == index) {
            return Err(VerdictError::DuplicateIndex { index });
        }
        steps.push(VerdictStep { index, text, score });
    }
    steps.sort_by_key(|s| s.index);

    let reported_final = match first_present(object, &FINAL_SCORE_KEYS) {
        Some((key, raw)) => {
            let got = coerce_integer(raw).ok_or_else(|| VerdictError::NonIntegerScore {
                key: key.to_string(),
            })?;
            if !(0..=10).contains(&got) {
                return Err(VerdictError::FinalScoreOutOfRange { got });
            }
            Some(got as u8)
        }
        None => None,
    };

    let chain_text = match first_present(object, &CHAIN_KEYS) {
        Some((key, raw)) => Some(
            raw.as_str()
                .map(str::to_string)
                .ok_or_else(|| VerdictError::NonStringChain {
                    key: key.to_string(),
                })?,
        ),
        None => None,
    };

    if steps.is_empty() {
        // Only the bypass form is acceptable without step keys.
        let got = reported_final.ok_or(VerdictError::NoStepKeys)?;
        if got != 0 && got != 10 {
            return Err(VerdictError::BypassScoreInvalid { got: got as i64 });
        }
        return Ok(AgentVerdict {
            steps,
            reported_final,
            chain_text,
            bypass: true,
        });
    }

    let missing: Vec<usize> = (1..=steps.len())
        .filter(|i| steps.iter().all(|s| s.index != *i))
        .collect();
    if !missing.is_empty() {
        return Err(VerdictError::MissingIndices { missing });
    }

    Ok(AgentVerdict {
        steps,
        reported_final,
        chain_text,
        bypass: false,
    })
}

/// Parses the single-field `{"score": n}` verdict used by the baseline
/// evaluators, enforcing `0..=max`.
pub fn parse_score_verdict(value: &Value, max: u8) -> Result<u8, VerdictError> {
    let object = value.as_object().ok_or(VerdictError::NotAnObject)?;
    let raw = object.get("score").ok_or(VerdictError::MissingField {
        key: "score".to_string(),
    })?;
    let got = coerce_integer(raw).ok_or(VerdictError::NonIntegerScore {
        key: "score".to_string(),
    })?;
    if got < 0 || got > max as i64 {
        return Err(VerdictError::ScoreOutOfRange { got, max });
    }
    Ok(got as u8)
}

/// Splits a step key of the form `(N)text` / `（N）text` into index and text.
fn split_step_key(key: &str) -> Option<(usize, String)> {
    let trimmed = key.trim_start();
    let rest = trimmed
        .strip_prefix('(')
        .or_else(|| trimmed.strip_prefix('（'))?;
    let close = rest.find([')', '）'])?;
    let digits = rest[..close].trim();
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let index: usize = digits.parse().ok()?;
    let text = rest[close..]
        .trim_start_matches([')', '）'])
        .trim()
        .to_string();
    Some((index, text))
}

fn coerce_binary(value: &Value) -> Option<u8> {
    match coerce_integer(value) {
        Some(0) => Some(0),
        Some(1) => Some(1),
        _ => match value {
            Value::Bool(b) => Some(*b as u8),
            _ => None,
        },
    }
}

fn coerce_integer(value: &Value) -> Option<i64> {
    match value {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Some(i)
            } else {
                // Accept float-typed integers such as 7.0.
                let f = n.as_f64()?;
                (f.fract() == 0.0).then_some(f as i64)
            }
        }
        Value::String(s) => s.trim().parse::<i64>().ok(),
        _ => None,
    }
}

fn first_present<'a>(
    object: &'a serde_json::Map<String, Value>,
    keys: &'static [&'static str; 2],
) -> Option<(&'static str, &'a Value)> {
    keys.iter().find_map(|k| object.get(*k).map(|v| (*k, v)))
}
