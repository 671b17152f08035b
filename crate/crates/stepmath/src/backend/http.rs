//! HTTP chat-completions client covering hosted gateways and local stand-ins.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{BackendError, CompletionBackend, CompletionRequest, Transcript};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "STEPMATH_API_KEY";
/// Environment variable overriding the endpoint base URL.
pub const BASE_URL_ENV: &str = "STEPMATH_BASE_URL";

const BACKOFF_CAP_MS: u64 = 10_000;

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Endpoint base, e.g. `https://api.example.com/v1`.
    pub base_url: String,
    pub api_key: Option<String>,
    /// Retries after the first attempt, for transient failures only.
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "http://localhost:8000/v1".to_string(),
            api_key: None,
            max_retries: 3,
            initial_backoff_ms: 250,
        }
    }
}

impl HttpConfig {
    /// Fills base URL and API key from the environment where present.
    pub fn from_env() -> Self {
        let mut config = HttpConfig::default();
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            if !url.trim().is_empty() {
                config.base_url = url;
            }
        }
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if !key.trim().is_empty() {
                config.api_key = Some(key);
            }
        }
        config
    }
}

/// Blocking client for the de-facto chat-completions wire shape.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    config: HttpConfig,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::Transport {
                message: format!("failed to build http client: {e}"),
                attempts: 0,
            })?;
        Ok(HttpBackend { client, config })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn send_once(
        &self,
        url: &str,
        body: &Value,
        timeout: Duration,
        attempts: u32,
    ) -> Result<(u16, String), BackendError> {
        let mut builder = self
            .client
            .post(url)
            .header("Content-Type", "application/json")
            .timeout(timeout)
            .body(body.to_string());
        if let Some(key) = &self.config.api_key {
            builder = builder.header("Authorization", format!("Bearer {key}"));
        }
        let response = builder.send().map_err(|e| BackendError::Transport {
            message: e.to_string(),
            attempts,
        })?;
        let status = response.status().as_u16();
        let text = response.text().map_err(|e| BackendError::Transport {
            message: format!("failed reading response body: {e}"),
            attempts,
        })?;
        Ok((status, text))
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Transcript, BackendError> {
        let url = self.endpoint();
        let mut body = json!({
            "model": request.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
        });
        if let Some(max) = request.max_output_tokens {
            body["max_tokens"] = json!(max);
        }

        let started = Instant::now();
        let mut retries = 0u32;
        loop {
            let attempts = retries + 1;
            let outcome = self.send_once(&url, &body, request.timeout(), attempts);

            let error = match outcome {
                Ok((status, text)) => match status {
                    200..=299 => {
                        let content = parse_completion_body(&text)?;
                        let mut provider_metadata = BTreeMap::new();
                        provider_metadata.insert("http_status".to_string(), status.to_string());
                        return Ok(Transcript {
                            request: request.clone(),
                            raw_response: content,
                            latency_ms: started.elapsed().as_millis() as u64,
                            retry_count: retries,
                            provider_metadata,
                        });
                    }
                    401 | 403 => return Err(BackendError::Auth { status }),
                    429 | 500..=599 => BackendError::Status {
                        status,
                        body: text,
                        attempts,
                    },
                    _ => return Err(BackendError::Rejected { status, body: text }),
                },
                Err(e) => e,
            };

            if !error.is_retryable() || retries >= self.config.max_retries {
                return Err(error);
            }
            let backoff = self
                .config
                .initial_backoff_ms
                .saturating_mul(1 << retries.min(16))
                .min(BACKOFF_CAP_MS);
            std::thread::sleep(Duration::from_millis(backoff));
            retries += 1;
        }
    }
}

/// Pulls `choices[0].message.content` out of a chat-completion response body.
fn parse_completion_body(text: &str) -> Result<String, BackendError> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| BackendError::MalformedResponse(format!("invalid JSON body: {e}")))?;
    let content = value
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str())
        .ok_or_else(|| {
            BackendError::MalformedResponse("missing choices[0].message.content".to_string())
        })?;
    if content.trim().is_empty() {
        return Err(BackendError::EmptyResponse);
    }
    Ok(content.to_string())
}
