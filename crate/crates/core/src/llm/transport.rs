//! Wire transports. [`HttpTransport`] speaks the OpenAI-compatible
//! chat-completions protocol; tests substitute their own [`Transport`].

use super::{LlmRequest, ResponseFormat};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError {
    pub message: String,
    /// Network failures, 429 and 5xx are retried; other failures are final.
    pub retryable: bool,
}

impl TransportError {
    pub fn retryable(message: impl Into<String>) -> Self {
        Self { message: message.into(), retryable: true }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self { message: message.into(), retryable: false }
    }
}

impl fmt::Display for TransportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for TransportError {}

/// Sends one request and returns the assistant message text.
pub trait Transport: Send + Sync {
    fn send(&self, request: &LlmRequest) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseFormatSpec {
    #[serde(rename = "type")]
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatCompletionRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response_format: Option<ResponseFormatSpec>,
}

impl ChatCompletionRequest {
    pub fn from_request(model: &str, req: &LlmRequest) -> Self {
        let mut messages = Vec::with_capacity(2);
        if !req.system_prompt.is_empty() {
            messages.push(ChatMessage { role: "system".into(), content: req.system_prompt.clone() });
        }
        messages.push(ChatMessage { role: "user".into(), content: req.user_prompt.clone() });
        Self {
            model: model.to_string(),
            messages,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
            response_format: match req.response_format {
                ResponseFormat::JsonObject => Some(ResponseFormatSpec { kind: "json_object".into() }),
                ResponseFormat::FreeText => None,
            },
        }
    }
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Extracts `choices[0].message.content` from a chat-completions body.
pub fn parse_completion_body(body: &str) -> Result<String, TransportError> {
    let parsed: ChatCompletionResponse = serde_json::from_str(body)
        .map_err(|e| TransportError::fatal(format!("malformed completion body: {e}")))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| TransportError::fatal("completion body has no message content"))
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    model: String,
}

impl HttpTransport {
    pub fn new(endpoint: &str, api_key: Option<String>, model: &str, timeout: Duration) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client");
        Self {
            client,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            api_key,
            model: model.to_string(),
        }
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &LlmRequest) -> Result<String, TransportError> {
        let body = ChatCompletionRequest::from_request(&self.model, request);
        let mut http = self
            .client
            .post(format!("{}/chat/completions", self.endpoint))
            .json(&body);
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let resp = http.send().map_err(|e| TransportError::retryable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| TransportError::retryable(e.to_string()))?;
        if status.is_success() {
            return parse_completion_body(&text);
        }
        let message = format!("HTTP {status}: {}", text.chars().take(300).collect::<String>());
        if status.as_u16() == 429 || status.is_server_error() {
            Err(TransportError::retryable(message))
        } else {
            Err(TransportError::fatal(message))
        }
    }
}
