//! Completion backends: the provider-agnostic request/transcript contract, a
//! deterministic scripted mock, an HTTP chat-completions client, and recovery
//! of JSON verdicts from free-form model output.

mod extract;
mod http;
mod mock;
mod verdict;

pub use extract::{extract_json, ExtractError};
pub use http::{HttpBackend, HttpConfig, API_KEY_ENV, BASE_URL_ENV};
pub use mock::MockBackend;
pub use verdict::{parse_agent_verdict, parse_score_verdict, AgentVerdict, VerdictError, VerdictStep};

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("prompt must be non-empty")]
    EmptyPrompt,
    #[error("temperature must be >= 0 (got {0})")]
    NegativeTemperature(f64),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("authentication rejected (status {status})")]
    Auth { status: u16 },
    #[error("provider rejected the request (status {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("provider returned status {status} after {attempts} attempt(s): {body}")]
    Status {
        status: u16,
        body: String,
        attempts: u32,
    },
    #[error("provider returned an empty or refused response")]
    EmptyResponse,
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("mock script exhausted after {consumed} response(s)")]
    ScriptExhausted { consumed: usize },
}

impl BackendError {
    /// Transport failures and throttling/server statuses are worth retrying;
    /// auth and bad-request classes are not.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            BackendError::Transport { .. } | BackendError::Status { .. }
        )
    }
}

/// A single-turn completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub model_name: String,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_output_tokens: Option<u32>,
    pub timeout_ms: u64,
}

impl CompletionRequest {
    pub const DEFAULT_TIMEOUT_MS: u64 = 120_000;

    /// Zero-temperature single-turn request with the default timeout.
    pub fn new(prompt: impl Into<String>, model_name: impl Into<String>) -> Result<Self, BackendError> {
        let prompt = prompt.into();
        if prompt.trim().is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        Ok(CompletionRequest {
            prompt,
            model_name: model_name.into(),
            temperature: 0.0,
            max_output_tokens: None,
            timeout_ms: Self::DEFAULT_TIMEOUT_MS,
        })
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self, BackendError> {
        if temperature < 0.0 {
            return Err(BackendError::NegativeTemperature(temperature));
        }
        self.temperature = temperature;
        Ok(self)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

/// Verbatim record of one backend exchange, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub request: CompletionRequest,
    pub raw_response: String,
    pub latency_ms: u64,
    pub retry_count: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provider_metadata: BTreeMap<String, String>,
}

/// Blocking completion contract. Implementations must be safe for concurrent
/// use; running requests in parallel is the caller's job.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Transcript, BackendError>;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for &B {
    fn complete(&self, request: &CompletionRequest) -> Result<Transcript, BackendError> {
        (**self).complete(request)
    }
}
