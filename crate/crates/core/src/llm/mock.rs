//! Local OpenAI-compatible endpoint for tests and offline runs.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, LazyLock};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use regex::Regex;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::estimate_text_tokens;
use super::parse::render_answer;

#[derive(Debug, Clone, PartialEq)]
pub enum MockMode {
    /// Answers derived from the request: the similarity-weighted positive
    /// share of any reference cases, otherwise a hash of the image.
    Deterministic,
    Fixed {
        text: String,
        prompt_tokens: Option<u64>,
    },
    Status(u16),
    /// 200 with a body that is not a chat completion.
    Malformed,
}

#[derive(Debug, Clone)]
pub struct MockConfig {
    pub mode: MockMode,
    /// Number of initial requests answered with 503.
    pub fail_first: u64,
    /// Bearer token the server insists on, if any.
    pub required_key: Option<String>,
    /// Prompt tokens charged for an attached image.
    pub image_tokens: u64,
    pub latency: Duration,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            mode: MockMode::Deterministic,
            fail_first: 0,
            required_key: None,
            image_tokens: 300,
            latency: Duration::ZERO,
        }
    }
}

struct Shared {
    config: MockConfig,
    requests: AtomicU64,
}

static REFERENCE_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"Reference case \d+: cosine similarity (-?[0-9.]+), confirmed COVID-19 (positive|negative)")
        .expect("reference pattern compiles")
});

fn round_to_five(percent: f64) -> u32 {
    ((percent / 5.0).round() * 5.0).clamp(0.0, 100.0) as u32
}

/// Positive percentage the deterministic mode answers with.
pub fn deterministic_percent(system_text: &str, image_url: Option<&str>) -> u32 {
    let mut weight = 0.0;
    let mut positive = 0.0;
    for c in REFERENCE_LINE.captures_iter(system_text) {
        let s: f64 = c[1].parse().unwrap_or(0.0);
        let w = s.max(0.0);
        weight += w;
        if &c[2] == "positive" {
            positive += w;
        }
    }
    if weight > 0.0 {
        return round_to_five(100.0 * positive / weight);
    }
    let digest = Sha256::digest(image_url.unwrap_or("").as_bytes());
    u32::from(digest[0] % 21) * 5
}

fn completion(text: &str, prompt_tokens: Option<u64>) -> Value {
    let mut body = json!({
        "id": "mock-completion",
        "object": "chat.completion",
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": text},
            "finish_reason": "stop"
        }]
    });
    if let Some(p) = prompt_tokens {
        let c = estimate_text_tokens(text);
        body["usage"] = json!({"prompt_tokens": p, "completion_tokens": c, "total_tokens": p + c});
    }
    body
}

fn system_text(body: &Value) -> String {
    body["messages"]
        .as_array()
        .into_iter()
        .flatten()
        .filter(|m| m["role"] == "system")
        .filter_map(|m| m["content"].as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

fn image_url(body: &Value) -> Option<String> {
    body["messages"]
        .as_array()?
        .iter()
        .filter_map(|m| m["content"].as_array())
        .flatten()
        .find(|p| p["type"] == "image_url")
        .and_then(|p| p["image_url"]["url"].as_str())
        .map(str::to_string)
}

async fn handle(State(shared): State<Arc<Shared>>, headers: HeaderMap, body: String) -> Response {
    let n = shared.requests.fetch_add(1, Ordering::SeqCst);
    let config = &shared.config;
    if !config.latency.is_zero() {
        tokio::time::sleep(config.latency).await;
    }
    if let Some(key) = &config.required_key {
        let expected = format!("Bearer {key}");
        let given = headers.get("authorization").and_then(|v| v.to_str().ok());
        if given != Some(expected.as_str()) {
            return (StatusCode::UNAUTHORIZED, "invalid api key").into_response();
        }
    }
    if n < config.fail_first {
        return (StatusCode::SERVICE_UNAVAILABLE, "overloaded").into_response();
    }
    let Ok(request) = serde_json::from_str::<Value>(&body) else {
        return (StatusCode::BAD_REQUEST, "body is not JSON").into_response();
    };
    match &config.mode {
        MockMode::Status(code) => {
            let code = StatusCode::from_u16(*code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            (code, "mock status").into_response()
        }
        MockMode::Malformed => (StatusCode::OK, "{\"not\": \"a completion\"").into_response(),
        MockMode::Fixed { text, prompt_tokens } => Json(completion(text, *prompt_tokens)).into_response(),
        MockMode::Deterministic => {
            let system = system_text(&request);
            let image = image_url(&request);
            let p = deterministic_percent(&system, image.as_deref());
            let image_tokens = if image.is_some() { config.image_tokens } else { 0 };
            let prompt_tokens = estimate_text_tokens(&system) + image_tokens;
            let text = render_answer(f64::from(p), f64::from(100 - p));
            Json(completion(&text, Some(prompt_tokens))).into_response()
        }
    }
}

fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/v1/chat/completions", post(handle))
        .route("/chat/completions", post(handle))
        .with_state(shared)
}

/// A mock server on a background thread, stopped on drop.
pub struct MockLlmServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl MockLlmServer {
    pub fn start(config: MockConfig) -> std::io::Result<Self> {
        let shared = Arc::new(Shared {
            config,
            requests: AtomicU64::new(0),
        });
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let app = router(shared.clone());
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(Self {
            addr,
            shared,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    /// Base URL suitable for an endpoint's `base_url`.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn request_count(&self) -> u64 {
        self.shared.requests.load(Ordering::SeqCst)
    }
}

impl Drop for MockLlmServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Serves on `addr` until the process is killed.
pub fn serve_forever(addr: SocketAddr, config: MockConfig) -> std::io::Result<()> {
    let shared = Arc::new(Shared {
        config,
        requests: AtomicU64::new(0),
    });
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("mock endpoint listening on http://{}/v1", listener.local_addr()?);
        axum::serve(listener, router(shared)).await
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_follows_reference_cases() {
        let text = "Reference case 1: cosine similarity 0.900, confirmed COVID-19 positive\n\
                    Reference case 2: cosine similarity 0.900, confirmed COVID-19 positive\n\
                    Reference case 3: cosine similarity 0.900, confirmed COVID-19 negative";
        assert_eq!(deterministic_percent(text, None), 65);
        let all_neg = text.replace("positive", "negative");
        assert_eq!(deterministic_percent(&all_neg, Some("x")), 0);
    }

    #[test]
    fn percent_without_context_is_stable() {
        let a = deterministic_percent("no context", Some("data:image/png;base64,AAAA"));
        let b = deterministic_percent("no context", Some("data:image/png;base64,AAAA"));
        assert_eq!(a, b);
        assert_eq!(a % 5, 0);
        assert!(a <= 100);
    }
}
