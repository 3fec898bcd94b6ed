use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::{LlmError, LlmRequestRecord, RequestPayload, DEFAULT_IMAGE_TOKEN_FLOOR};

fn default_timeout_s() -> f64 {
    60.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_image_token_floor() -> u64 {
    DEFAULT_IMAGE_TOKEN_FLOOR
}

/// A chat-completion endpoint. Credentials are only ever read from the
/// environment variable named by `api_key_env`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub id: String,
    /// Base URL up to and including the API version, e.g.
    /// `https://api.openai.com/v1`.
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    /// Retries after the first attempt for transient transport failures.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Initial backoff, doubled after every failed attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_image_token_floor")]
    pub image_token_floor: u64,
}

impl EndpointConfig {
    pub fn new(id: impl Into<String>, base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: None,
            timeout_s: default_timeout_s(),
            max_retries: default_max_retries(),
            backoff_ms: default_backoff_ms(),
            image_token_floor: default_image_token_floor(),
        }
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Blocking client for one endpoint. Stateless per request.
#[derive(Debug, Clone)]
pub struct LlmClient {
    endpoint: EndpointConfig,
    http: reqwest::blocking::Client,
}

enum Attempt {
    Done(LlmRequestRecord),
    Retry { status: Option<u16>, reason: String },
    Fatal(LlmError),
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<serde_json::Value>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
}

/// Message text and token usage from a chat-completion response body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

pub fn decode_completion(body: &str) -> Result<Completion, String> {
    let wire: WireResponse = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let text = wire
        .choices
        .first()
        .and_then(|c| c.message.content.as_ref())
        .and_then(content_text)
        .ok_or_else(|| "no message content in first choice".to_string())?;
    let (prompt_tokens, completion_tokens) = wire
        .usage
        .map(|u| (u.prompt_tokens, u.completion_tokens))
        .unwrap_or((None, None));
    Ok(Completion {
        text,
        prompt_tokens,
        completion_tokens,
    })
}

fn content_text(content: &serde_json::Value) -> Option<String> {
    match content {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Array(parts) => Some(
            parts
                .iter()
                .filter_map(|p| p.get("text").and_then(|t| t.as_str()))
                .collect::<Vec<_>>()
                .join("\n"),
        ),
        _ => None,
    }
}

impl LlmClient {
    pub fn new(endpoint: EndpointConfig) -> Result<Self, LlmError> {
        if !(endpoint.timeout_s > 0.0) || !endpoint.timeout_s.is_finite() {
            return Err(LlmError::Template(format!(
                "endpoint `{}` needs a positive timeout",
                endpoint.id
            )));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(endpoint.timeout_s))
            .build()
            .map_err(|e| LlmError::MalformedResponse {
                endpoint: endpoint.id.clone(),
                reason: format!("building HTTP client: {e}"),
            })?;
        Ok(Self { endpoint, http })
    }

    pub fn endpoint(&self) -> &EndpointConfig {
        &self.endpoint
    }

    fn api_key(&self) -> Result<Option<String>, LlmError> {
        match &self.endpoint.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| LlmError::Auth {
                endpoint: self.endpoint.id.clone(),
                reason: format!("environment variable `{var}` is not set"),
            }),
        }
    }

    fn attempt(&self, body: &serde_json::Value, key: Option<&str>, image_attached: bool) -> Attempt {
        let endpoint = &self.endpoint.id;
        let mut request = self.http.post(self.endpoint.completions_url()).json(body);
        if let Some(key) = key {
            request = request.bearer_auth(key);
        }
        let started = Instant::now();
        let response = match request.send() {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry {
                    status: None,
                    reason: e.to_string(),
                }
            }
        };
        let status = response.status();
        let text = match response.text() {
            Ok(t) => t,
            Err(e) => {
                return Attempt::Retry {
                    status: None,
                    reason: format!("reading body: {e}"),
                }
            }
        };
        let round_trip_ms = started.elapsed().as_secs_f64() * 1000.0;
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Attempt::Fatal(LlmError::Auth {
                endpoint: endpoint.clone(),
                reason: format!("HTTP {status}"),
            });
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Retry {
                status: Some(status.as_u16()),
                reason: format!("HTTP {status}"),
            };
        }
        if !status.is_success() {
            return Attempt::Fatal(LlmError::Rejected {
                endpoint: endpoint.clone(),
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        let malformed = |reason: String| {
            Attempt::Fatal(LlmError::MalformedResponse {
                endpoint: endpoint.clone(),
                reason,
            })
        };
        let (raw_text, prompt_tokens, completion_tokens) = match decode_completion(&text) {
            Ok(c) => (c.text, c.prompt_tokens, c.completion_tokens),
            Err(reason) => return malformed(reason),
        };
        Attempt::Done(LlmRequestRecord {
            endpoint_id: endpoint.clone(),
            prompt_tokens,
            completion_tokens,
            round_trip_ms,
            raw_text,
            image_attached,
            attempts: 0,
        })
    }

    /// Sends one request, retrying transient transport failures with
    /// exponential backoff. Answers are never retried, whatever they say.
    pub fn send(&self, payload: &RequestPayload) -> Result<LlmRequestRecord, LlmError> {
        let key = self.api_key()?;
        let body = payload.to_wire(&self.endpoint.model);
        let total_attempts = self.endpoint.max_retries + 1;
        let mut backoff = Duration::from_millis(self.endpoint.backoff_ms);
        let mut last = (None, String::new());
        for attempt in 1..=total_attempts {
            match self.attempt(&body, key.as_deref(), payload.image_attached()) {
                Attempt::Done(mut record) => {
                    record.attempts = attempt;
                    debug!(
                        "{}: {:.1} ms, prompt tokens {:?}",
                        self.endpoint.id, record.round_trip_ms, record.prompt_tokens
                    );
                    return Ok(record);
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry { status, reason } => {
                    warn!(
                        "{}: attempt {attempt}/{total_attempts} failed: {reason}",
                        self.endpoint.id
                    );
                    last = (status, reason);
                    if attempt < total_attempts {
                        std::thread::sleep(backoff);
                        backoff = backoff.saturating_mul(2);
                    }
                }
            }
        }
        Err(match last {
            (Some(status), _) => LlmError::Unavailable {
                endpoint: self.endpoint.id.clone(),
                status,
                attempts: total_attempts,
            },
            (None, reason) => LlmError::Timeout {
                endpoint: self.endpoint.id.clone(),
                attempts: total_attempts,
                reason,
            },
        })
    }
}
