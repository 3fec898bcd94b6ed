//! Probability-restricted prompting of remote chat-completion endpoints.
//!
//! The endpoint is instructed to answer with exactly two lines, the
//! probability of COVID-19 symptoms and the probability of none, which
//! [`parse_probabilities`] turns back into a [`Diagnosis`](crate::Diagnosis).
//! Prompt-token usage reported by the endpoint is checked against a
//! text-only estimate to catch requests whose image never arrived.

mod client;
pub mod mock;
mod parse;
mod prompt;

pub use client::{decode_completion, Completion, EndpointConfig, LlmClient};
pub use parse::{interpret_response, parse_probabilities, render_answer, Outcome};
pub use prompt::{build_prompt, PromptTemplate, RequestPayload, CONTEXT_SLOT};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum number of extra prompt tokens an attached image must account for.
pub const DEFAULT_IMAGE_TOKEN_FLOOR: u64 = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("template error: {0}")]
    Template(String),
    #[error("input format error: {0}")]
    InputFormat(String),
    #[error("authentication failed for `{endpoint}`: {reason}")]
    Auth { endpoint: String, reason: String },
    #[error("`{endpoint}` timed out after {attempts} attempt(s): {reason}")]
    Timeout {
        endpoint: String,
        attempts: u32,
        reason: String,
    },
    #[error("`{endpoint}` unavailable (HTTP {status}) after {attempts} attempt(s)")]
    Unavailable {
        endpoint: String,
        status: u16,
        attempts: u32,
    },
    #[error("`{endpoint}` rejected the request with HTTP {status}: {body}")]
    Rejected {
        endpoint: String,
        status: u16,
        body: String,
    },
    #[error("malformed response from `{endpoint}`: {reason}")]
    MalformedResponse { endpoint: String, reason: String },
    #[error("could not find both probability lines in response: {raw:?}")]
    Parse { raw: String },
    #[error("probabilities {positive}% and {negative}% are inconsistent: {raw:?}")]
    Inconsistent {
        positive: f64,
        negative: f64,
        raw: String,
    },
}

impl LlmError {
    /// Transport-level failures, as opposed to answers that could not be
    /// scored.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            LlmError::Timeout { .. }
                | LlmError::Unavailable { .. }
                | LlmError::Rejected { .. }
                | LlmError::MalformedResponse { .. }
                | LlmError::Auth { .. }
        )
    }
}

/// One completed request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequestRecord {
    pub endpoint_id: String,
    /// `None` when the endpoint reported no usage block.
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub round_trip_ms: f64,
    pub raw_text: String,
    pub image_attached: bool,
    /// Attempts made, including the successful one.
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryVerdict {
    Ok,
    SuspectNoImage,
    /// The endpoint reported no prompt-token usage.
    Unverified,
}

/// Rough text-only token count: one token per four characters.
pub fn estimate_text_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4).max(1)
}

/// Flags records whose prompt-token count is too small to include an image.
/// The boundary `estimate + floor` itself passes.
pub fn verify_image_delivery(
    record: &LlmRequestRecord,
    text_only_token_estimate: u64,
    image_token_floor: u64,
) -> DeliveryVerdict {
    match record.prompt_tokens {
        None => DeliveryVerdict::Unverified,
        Some(t) if t < text_only_token_estimate.saturating_add(image_token_floor) => {
            DeliveryVerdict::SuspectNoImage
        }
        Some(_) => DeliveryVerdict::Ok,
    }
}
