//! Backend trait and the HTTP chat-completions client.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ChatRequest;

#[derive(Debug, Error)]
pub enum BackendError {
    /// Network-level failure; the gateway retries these.
    #[error("{0}")]
    Transport(String),
    /// The backend answered but not in the shape we expect; not retried.
    #[error("{0}")]
    Protocol(String),
    /// Replay-store miss; surfaced with the request digest.
    #[error("no recorded response for digest {digest}")]
    NotRecorded { digest: String },
}

/// A synchronous chat-completion provider.
pub trait ChatBackend: Send + Sync {
    /// Stable identifier hashed into every request digest.
    fn id(&self) -> &str;
    fn model_id(&self) -> &str;
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError>;
}

/// Client for an OpenAI-style `/chat/completions` endpoint.
pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    model: String,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: [WireMessage<'a>; 2],
    temperature: f64,
    max_tokens: u32,
    seed: u64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireResponseMessage,
}

#[derive(Deserialize)]
struct WireResponseMessage {
    content: Option<String>,
}

impl HttpBackend {
    /// `endpoint` is the full completions URL, e.g.
    /// `https://host/v1/chat/completions`.
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, model: impl Into<String>) -> Self {
        HttpBackend {
            endpoint: endpoint.into(),
            api_key,
            model: model.into(),
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl ChatBackend for HttpBackend {
    fn id(&self) -> &str {
        "http"
    }

    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let body = WireRequest {
            model: &self.model,
            messages: [
                WireMessage { role: "system", content: &req.system },
                WireMessage { role: "user", content: &req.user },
            ],
            temperature: req.temperature,
            max_tokens: req.max_tokens,
            seed: req.seed,
        };
        let mut call = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let response = call
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            let snippet: String = text.chars().take(200).collect();
            return Err(BackendError::Transport(format!(
                "endpoint returned {status}: {snippet}"
            )));
        }
        let parsed: WireResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::Protocol(format!("malformed completion body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Protocol("completion had no message content".into()))
    }
}
