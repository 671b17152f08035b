//! The evaluation pipeline: prompt selection, backend call, verdict parsing,
//! authoritative local rescoring, chain validation and error-forest
//! construction, plus the V1/V2/V3 baseline evaluators and rule-based exact
//! matching.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{
    aggregate_score, binary_score, degenerate_calculation, AggregateError, AggregationPolicy,
};
use crate::backend::{
    extract_json, parse_agent_verdict, parse_score_verdict, AgentVerdict, BackendError,
    CompletionBackend, CompletionRequest, ExtractError, Transcript, VerdictError, VerdictStep,
};
use crate::core::{LabeledStep, Problem, ProblemType, ScoredSolution, SolutionOrigin, StepLabel};
use crate::errortree::{build_forest, parse_chains, validate_against_labels, ErrorChain, ErrorForest};
use crate::prompts::{
    agent_prompt, render_evaluation_input, ModuleSet, PromptLanguage, PromptVariant,
    UnsupportedCombination, BASELINE_V1_EN, BASELINE_V1_ZH, BASELINE_V2_EN, BASELINE_V2_ZH,
    BASELINE_V3_EN, BASELINE_V3_ZH,
};

/// Step-count hints matching the replication presets.
pub const REPLICATION_STEP_HINTS: [u32; 5] = [4, 6, 8, 10, 12];

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    UnsupportedModules(#[from] UnsupportedCombination),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no verdict JSON recovered after {attempts} attempt(s): {source}")]
    Extract {
        source: ExtractError,
        transcripts: Vec<Transcript>,
        attempts: u32,
    },
    #[error("malformed verdict after {attempts} attempt(s): {source}")]
    Verdict {
        source: VerdictError,
        transcripts: Vec<Transcript>,
        attempts: u32,
    },
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("rule-based matching requires a reference answer")]
    MissingReference,
    #[error("rule-based matching only supports calculation problems (got {0:?})")]
    UnsupportedProblemType(ProblemType),
}

impl AgentError {
    /// Transcripts captured before the failure, for audit.
    pub fn transcripts(&self) -> &[Transcript] {
        match self {
            AgentError::Extract { transcripts, .. } | AgentError::Verdict { transcripts, .. } => {
                transcripts
            }
            _ => &[],
        }
    }
}

/// Which evaluator runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    Agent,
    V1,
    V2,
    V3,
    RuleEm,
}

impl EvalMode {
    pub fn parse(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "agent" => Some(EvalMode::Agent),
            "v1" => Some(EvalMode::V1),
            "v2" => Some(EvalMode::V2),
            "v3" => Some(EvalMode::V3),
            "rule_em" | "ruleem" => Some(EvalMode::RuleEm),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EvalMode::Agent => "agent",
            EvalMode::V1 => "v1",
            EvalMode::V2 => "v2",
            EvalMode::V3 => "v3",
            EvalMode::RuleEm => "rule_em",
        }
    }
}

/// Evaluator configuration. External modules apply to agent mode only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub mode: EvalMode,
    #[serde(default)]
    pub modules: ModuleSet,
    #[serde(default)]
    pub step_hint: Option<u32>,
    #[serde(default)]
    pub prompt_language: PromptLanguage,
    #[serde(default)]
    pub policy: AggregationPolicy,
    pub model_name: String,
    #[serde(default)]
    pub max_output_tokens: Option<u32>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    CompletionRequest::DEFAULT_TIMEOUT_MS
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mode: EvalMode::Agent,
            modules: ModuleSet::empty(),
            step_hint: None,
            prompt_language: PromptLanguage::Chinese,
            policy: AggregationPolicy::default(),
            model_name: "gpt-4o".to_string(),
            max_output_tokens: None,
            timeout_ms: default_timeout_ms(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.mode != EvalMode::Agent && !self.modules.is_empty() {
            return Err(AgentError::Config(format!(
                "external modules only apply to agent mode (mode is {})",
                self.mode.as_str()
            )));
        }
        if let Some(hint) = self.step_hint {
            if hint < 2 {
                return Err(AgentError::Config(format!(
                    "step hint must be at least 2 (got {hint})"
                )));
            }
        }
        self.policy
            .validate()
            .map_err(|e| AgentError::Config(e.to_string()))?;
        Ok(())
    }

    /// Agent-mode config pinned to one of the replication step hints.
    pub fn replication_preset(hint: u32) -> Result<Self, AgentError> {
        if !REPLICATION_STEP_HINTS.contains(&hint) {
            return Err(AgentError::Config(format!(
                "replication step hint must be one of {REPLICATION_STEP_HINTS:?} (got {hint})"
            )));
        }
        Ok(EvalConfig {
            step_hint: Some(hint),
            ..EvalConfig::default()
        })
    }
}

/// Outcome of one evaluation, including the audit transcripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub mode: EvalMode,
    /// The grade this tool stands behind: recomputed locally for agent mode,
    /// never the model's self-reported number.
    pub final_score: u8,
    #[serde(default)]
    pub steps: Vec<VerdictStep>,
    #[serde(default)]
    pub reported_final: Option<u8>,
    pub score_mismatch: bool,
    #[serde(default)]
    pub chains: Vec<ErrorChain>,
    #[serde(default)]
    pub forest: ErrorForest,
    #[serde(default)]
    pub diagnostics: Vec<String>,
    #[serde(default)]
    pub binary: Option<u8>,
    #[serde(default)]
    pub bypass: bool,
    #[serde(default)]
    pub transcripts: Vec<Transcript>,
}

/// Builds the full prompt for the configured evaluator.
pub fn build_prompt(
    problem: &Problem,
    solution_text: &str,
    config: &EvalConfig,
) -> Result<String, AgentError> {
    config.validate()?;
    let language = config.prompt_language;
    let instruction: String = match config.mode {
        EvalMode::Agent => {
            let variant = PromptVariant::from_modules(&config.modules)?;
            agent_prompt(variant, language)
        }
        EvalMode::V1 => baseline_instruction(EvalMode::V1, language).to_string(),
        EvalMode::V2 => baseline_instruction(EvalMode::V2, language).to_string(),
        EvalMode::V3 => baseline_instruction(EvalMode::V3, language).to_string(),
        EvalMode::RuleEm => {
            return Err(AgentError::Config(
                "rule_em is rule-based and has no prompt".to_string(),
            ))
        }
    };
    let step_hint = if config.mode == EvalMode::Agent {
        config.step_hint
    } else {
        None
    };
    Ok(render_evaluation_input(
        &instruction,
        language,
        &problem.statement,
        problem.constraint.as_deref(),
        problem.reference_answer.as_deref(),
        solution_text,
        step_hint,
    ))
}

fn baseline_instruction(mode: EvalMode, language: PromptLanguage) -> &'static str {
    match (mode, language) {
        (EvalMode::V1, PromptLanguage::Chinese) => BASELINE_V1_ZH,
        (EvalMode::V1, PromptLanguage::English) => BASELINE_V1_EN,
        (EvalMode::V2, PromptLanguage::Chinese) => BASELINE_V2_ZH,
        (EvalMode::V2, PromptLanguage::English) => BASELINE_V2_EN,
        (EvalMode::V3, PromptLanguage::Chinese) => BASELINE_V3_ZH,
        (EvalMode::V3, PromptLanguage::English) => BASELINE_V3_EN,
        _ => unreachable!("only baseline modes have a single instruction"),
    }
}

/// Dispatches to the evaluator selected by `config.mode`.
pub fn run_evaluation(
    problem: &Problem,
    solution_text: &str,
    config: &EvalConfig,
    backend: &dyn CompletionBackend,
) -> Result<EvaluationResult, AgentError> {
    match config.mode {
        EvalMode::Agent => evaluate(problem, solution_text, config, backend),
        EvalMode::V1 | EvalMode::V2 | EvalMode::V3 => {
            evaluate_baseline(problem, solution_text, config, backend)
        }
        EvalMode::RuleEm => evaluate_rule_em(problem, solution_text),
    }
}

/// Runs the step-wise agent evaluation. The model's reported grade is
/// recorded but the returned `final_score` is always recomputed locally from
/// the parsed step scores; disagreement sets `score_mismatch`.
pub fn evaluate(
    problem: &Problem,
    solution_text: &str,
    config: &EvalConfig,
    backend: &dyn CompletionBackend,
) -> Result<EvaluationResult, AgentError> {
    let prompt = build_prompt(problem, solution_text, config)?;
    let request = completion_request(prompt, config)?;

    let (verdict, transcripts) = ask_with_retry(backend, &request, |raw| {
        let value = extract_json(raw).map_err(AskError::Extract)?;
        parse_agent_verdict(&value).map_err(AskError::Verdict)
    })?;

    if verdict.bypass {
        return bypass_result(verdict, transcripts);
    }

    let scores: Vec<u8> = verdict.steps.iter().map(|s| s.score).collect();
    let final_score = aggregate_score(problem.problem_type, &scores, &config.policy)?;
    let score_mismatch = verdict
        .reported_final
        .map(|reported| reported != final_score)
        .unwrap_or(false);

    let mut diagnostics = Vec::new();
    if degenerate_calculation(problem.problem_type, scores.len()) {
        diagnostics.push(
            "single-step calculation response: grade falls back to scaling the only step"
                .to_string(),
        );
    }

    let chains = match verdict.chain_text.as_deref().map(str::trim) {
        None | Some("") => Vec::new(),
        Some(text) => match parse_chains(text) {
            Ok(chains) => chains,
            Err(e) => {
                diagnostics.push(format!("unparseable error chains: {e}"));
                Vec::new()
            }
        },
    };
    let (forest, tree_diagnostics) = build_forest(&chains);
    diagnostics.extend(tree_diagnostics.iter().map(|d| d.to_string()));

    let scored = scored_solution(problem, config, &verdict.steps);
    diagnostics.extend(
        validate_against_labels(&chains, &scored)
            .iter()
            .map(|d| d.to_string()),
    );

    let binary = binary_score(problem.problem_type, &scores, final_score)?;

    Ok(EvaluationResult {
        mode: EvalMode::Agent,
        final_score,
        steps: verdict.steps,
        reported_final: verdict.reported_final,
        score_mismatch,
        chains,
        forest,
        diagnostics,
        binary: Some(binary),
        bypass: false,
        transcripts,
    })
}

fn bypass_result(
    verdict: AgentVerdict,
    transcripts: Vec<Transcript>,
) -> Result<EvaluationResult, AgentError> {
    let final_score = verdict
        .reported_final
        .expect("bypass verdicts always carry a grade");
    let mut diagnostics = Vec::new();
    let chains = match verdict.chain_text.as_deref().map(str::trim) {
        None | Some("") => Vec::new(),
        Some(text) => match parse_chains(text) {
            Ok(chains) => {
                diagnostics.push("bypass verdict carries a non-empty error chain".to_string());
                chains
            }
            Err(e) => {
                diagnostics.push(format!("unparseable error chains: {e}"));
                Vec::new()
            }
        },
    };
    let (forest, _) = build_forest(&chains);
    Ok(EvaluationResult {
        mode: EvalMode::Agent,
        final_score,
        steps: Vec::new(),
        reported_final: verdict.reported_final,
        score_mismatch: false,
        chains,
        forest,
        diagnostics,
        binary: Some(final_score / 10),
        bypass: true,
        transcripts,
    })
}

/// Rebuilds the labeled solution implied by a verdict so chains can be
/// cross-checked. Blank step texts get a placeholder; indices are already
/// contiguous after parsing.
fn scored_solution(problem: &Problem, config: &EvalConfig, steps: &[VerdictStep]) -> ScoredSolution {
    let labeled = steps
        .iter()
        .map(|s| LabeledStep {
            index: s.index,
            text: if s.text.trim().is_empty() {
                format!("step {}", s.index)
            } else {
                s.text.clone()
            },
            label: if s.score == 1 {
                StepLabel::Correct
            } else {
                StepLabel::Incorrect
            },
        })
        .collect();
    ScoredSolution::new(
        problem.id.clone(),
        config.model_name.clone(),
        labeled,
        SolutionOrigin::AgentVerdict,
    )
    .expect("verdict steps are contiguous and texts are placeholdered")
}

/// Runs one of the single-prompt baseline evaluators (V1, V2, V3).
pub fn evaluate_baseline(
    problem: &Problem,
    solution_text: &str,
    config: &EvalConfig,
    backend: &dyn CompletionBackend,
) -> Result<EvaluationResult, AgentError> {
    debug_assert!(matches!(config.mode, EvalMode::V1 | EvalMode::V2 | EvalMode::V3));
    if config.mode == EvalMode::V1
        && problem.problem_type == ProblemType::Calculation
        && problem.reference_answer.is_none()
    {
        return Err(AgentError::MissingReference);
    }
    let prompt = build_prompt(problem, solution_text, config)?;
    let request = completion_request(prompt, config)?;
    let max = if config.mode == EvalMode::V1 { 1 } else { 10 };

    let (score, transcripts) = ask_with_retry(backend, &request, |raw| {
        let value = extract_json(raw).map_err(AskError::Extract)?;
        parse_score_verdict(&value, max).map_err(AskError::Verdict)
    })?;

    let (final_score, binary) = if config.mode == EvalMode::V1 {
        // The 0/1 answer grade is kept raw; the 0-10 mapping exists only so
        // one metric path serves both evaluation blocks.
        (score * 10, Some(score))
    } else {
        (score, None)
    };

    Ok(EvaluationResult {
        mode: config.mode,
        final_score,
        steps: Vec::new(),
        reported_final: None,
        score_mismatch: false,
        chains: Vec::new(),
        forest: ErrorForest::default(),
        diagnostics: Vec::new(),
        binary,
        bypass: false,
        transcripts,
    })
}

pub fn evaluate_v1(
    problem: &Problem,
    solution_text: &str,
    config: &EvalConfig,
    backend: &dyn CompletionBackend,
) -> Result<EvaluationResult, AgentError> {
    let config = EvalConfig {
        mode: EvalMode::V1,
        modules: ModuleSet::empty(),
        ..config.clone()
    };
    evaluate_baseline(problem, solution_text, &config, backend)
}

pub fn evaluate_v2(
    problem: &Problem,
    solution_text: &str,
    config: &EvalConfig,
    backend: &dyn CompletionBackend,
) -> Result<EvaluationResult, AgentError> {
    let config = EvalConfig {
        mode: EvalMode::V2,
        modules: ModuleSet::empty(),
        ..config.clone()
    };
    evaluate_baseline(problem, solution_text, &config, backend)
}

pub fn evaluate_v3(
    problem: &Problem,
    solution_text: &str,
    config: &EvalConfig,
    backend: &dyn CompletionBackend,
) -> Result<EvaluationResult, AgentError> {
    let config = EvalConfig {
        mode: EvalMode::V3,
        modules: ModuleSet::empty(),
        ..config.clone()
    };
    evaluate_baseline(problem, solution_text, &config, backend)
}

/// Rule-based exact matching of the bracketed final answer against the
/// reference. Calculation problems with a reference answer only.
pub fn evaluate_rule_em(
    problem: &Problem,
    solution_text: &str,
) -> Result<EvaluationResult, AgentError> {
    if problem.problem_type != ProblemType::Calculation {
        return Err(AgentError::UnsupportedProblemType(problem.problem_type));
    }
    let reference = problem
        .reference_answer
        .as_deref()
        .ok_or(AgentError::MissingReference)?;

    let mut diagnostics = Vec::new();
    let binary = match extract_final_answer(solution_text) {
        Some(answer) => {
            let answer = normalize_answer(&answer);
            let reference = normalize_answer(reference);
            let equal = match (parse_plain_decimal(&answer), parse_plain_decimal(&reference)) {
                (Some(a), Some(r)) => a == r,
                _ => answer == reference,
            };
            equal as u8
        }
        None => {
            diagnostics.push("no bracketed final answer found in solution".to_string());
            0
        }
    };

    Ok(EvaluationResult {
        mode: EvalMode::RuleEm,
        final_score: binary * 10,
        steps: Vec::new(),
        reported_final: None,
        score_mismatch: false,
        chains: Vec::new(),
        forest: ErrorForest::default(),
        diagnostics,
        binary: Some(binary),
        bypass: false,
        transcripts: Vec::new(),
    })
}

/// The bracketed answer after the last `最终答案` marker, falling back to the
/// last bracketed segment anywhere in the text.
fn extract_final_answer(text: &str) -> Option<String> {
    const MARKER: &str = "最终答案";
    if let Some(pos) = text.rfind(MARKER) {
        if let Some(answer) = first_bracketed(&text[pos + MARKER.len()..]) {
            return Some(answer);
        }
    }
    last_bracketed(text)
}

fn first_bracketed(text: &str) -> Option<String> {
    let open = text.find('【')?;
    let rest = &text[open + '【'.len_utf8()..];
    let close = rest.find('】')?;
    Some(rest[..close].to_string())
}

fn last_bracketed(text: &str) -> Option<String> {
    let open = text.rfind('【')?;
    first_bracketed(&text[open..])
}

/// Trims, maps full-width ASCII forms to half width, and collapses internal
/// whitespace runs to single spaces.
fn normalize_answer(s: &str) -> String {
    let widened: String = s
        .chars()
        .map(|c| match c {
            '\u{3000}' => ' ',
            '\u{FF01}'..='\u{FF5E}' => {
                char::from_u32(c as u32 - 0xFEE0).expect("offset stays in ASCII range")
            }
            other => other,
        })
        .collect();
    widened.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses strings of the shape `[+-]?digits[.digits]` (plain decimals only;
/// no exponents, no infinities).
fn parse_plain_decimal(s: &str) -> Option<f64> {
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    if body.is_empty() {
        return None;
    }
    let mut parts = body.splitn(2, '.');
    let int_part = parts.next().unwrap_or("");
    let frac_part = parts.next();
    let digits_ok = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    let valid = match frac_part {
        Some(frac) => {
            (digits_ok(int_part) && (frac.is_empty() || digits_ok(frac)))
                || (int_part.is_empty() && digits_ok(frac))
        }
        None => digits_ok(int_part),
    };
    if !valid {
        return None;
    }
    s.parse::<f64>().ok()
}

enum AskError {
    Extract(ExtractError),
    Verdict(VerdictError),
}

fn completion_request(prompt: String, config: &EvalConfig) -> Result<CompletionRequest, AgentError> {
    let mut request = CompletionRequest::new(prompt, config.model_name.clone())?;
    request.max_output_tokens = config.max_output_tokens;
    request.timeout_ms = config.timeout_ms;
    Ok(request)
}

/// Sends the request and parses the response, re-asking with the same prompt
/// exactly once on extraction or verdict-shape failures. Transport errors
/// propagate immediately.
fn ask_with_retry<T>(
    backend: &dyn CompletionBackend,
    request: &CompletionRequest,
    parse: impl Fn(&str) -> Result<T, AskError>,
) -> Result<(T, Vec<Transcript>), AgentError> {
    let mut transcripts = Vec::new();
    for attempt in 1..=2u32 {
        let transcript = backend.complete(request)?;
        transcripts.push(transcript);
        match parse(&transcripts.last().expect("just pushed").raw_response) {
            Ok(parsed) => return Ok((parsed, transcripts)),
            Err(ask) if attempt == 2 => {
                return Err(match ask {
                    AskError::Extract(source) => AgentError::Extract {
                        source,
                        transcripts,
                        attempts: attempt,
                    },
                    AskError::Verdict(source) => AgentError::Verdict {
                        source,
                        transcripts,
                        attempts: attempt,
                    },
                })
            }
            Err(_) => {} // re-ask once with the same prompt
        }
    }
    unreachable!("the two-attempt loop always returns")
}
