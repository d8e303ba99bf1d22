//! Single entry point for all model calls.
//!
//! [`Gateway::complete`] handles retries with exponential backoff, structured
//! output repair, bounded concurrency and the record/replay cassette. In
//! replay mode the transport is never touched.

mod cassette;
mod repair;
mod scripted;
mod transport;

pub use cassette::{Cassette, CassetteEntry, CassetteMode, RequestSummary};
pub use repair::{repair_json, strip_code_fence};
pub use scripted::{FnTransport, ScriptRule, ScriptedTransport};
pub use transport::{
    parse_completion_body, ChatCompletionRequest, ChatMessage, HttpTransport, Transport,
    TransportError,
};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("no model endpoint configured")]
    Unavailable,
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("model output is not valid structured data: {text:?}")]
    StructuredOutput { text: String },
    #[error("replay miss for request fingerprint {0}")]
    ReplayMiss(String),
    #[error("cassette error: {0}")]
    Cassette(String),
}

/// Which agent a request belongs to; selects the prompt template and the
/// default temperature.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RoleTag {
    Extractor,
    Verifier,
    Decomposer,
    Persona(String),
    Explainer,
}

impl RoleTag {
    pub fn default_temperature(&self) -> f64 {
        match self {
            RoleTag::Verifier | RoleTag::Decomposer | RoleTag::Persona(_) => 0.0,
            RoleTag::Explainer => 0.2,
            RoleTag::Extractor => 0.1,
        }
    }
}

impl fmt::Display for RoleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoleTag::Extractor => f.write_str("extractor"),
            RoleTag::Verifier => f.write_str("verifier"),
            RoleTag::Decomposer => f.write_str("decomposer"),
            RoleTag::Persona(id) => write!(f, "persona:{id}"),
            RoleTag::Explainer => f.write_str("explainer"),
        }
    }
}

impl std::str::FromStr for RoleTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "extractor" => RoleTag::Extractor,
            "verifier" => RoleTag::Verifier,
            "decomposer" => RoleTag::Decomposer,
            "explainer" => RoleTag::Explainer,
            other => match other.strip_prefix("persona:") {
                Some(id) if !id.is_empty() => RoleTag::Persona(id.to_string()),
                _ => return Err(format!("unknown role tag `{other}`")),
            },
        })
    }
}

impl Serialize for RoleTag {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for RoleTag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseFormat {
    FreeText,
    JsonObject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub role: RoleTag,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub response_format: ResponseFormat,
}

impl LlmRequest {
    pub fn new(role: RoleTag, system: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            temperature: role.default_temperature(),
            role,
            system_prompt: system.into(),
            user_prompt: user.into(),
            max_tokens: 1024,
            response_format: ResponseFormat::FreeText,
        }
    }

    pub fn json(mut self) -> Self {
        self.response_format = ResponseFormat::JsonObject;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature.clamp(0.0, 1.0);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    /// Filled by the repair pipeline for `json_object` requests; never stored.
    #[serde(skip)]
    pub parsed: Option<Value>,
    pub latency_ms: u64,
    pub attempt: u32,
}

/// SHA-256 over the role tag, both prompts (raw bytes) and the temperature.
pub fn fingerprint(req: &LlmRequest) -> String {
    let canonical = serde_json::json!([
        req.role.to_string(),
        req.system_prompt,
        req.user_prompt,
        format!("{:?}", req.temperature),
    ]);
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn no_delay() -> Self {
        Self { base_delay: Duration::ZERO, ..Self::default() }
    }

    fn delay_before(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(2))
    }
}

struct Semaphore {
    available: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self { available: Mutex::new(permits.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut n = self.available.lock().unwrap();
        while *n == 0 {
            n = self.cv.wait(n).unwrap();
        }
        *n -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

pub const DEFAULT_PARALLELISM: usize = 4;

pub struct Gateway {
    transport: Option<Arc<dyn Transport>>,
    cassette: Option<Arc<Cassette>>,
    mode: CassetteMode,
    retry: RetryPolicy,
    permits: Semaphore,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("has_transport", &self.transport.is_some())
            .field("mode", &self.mode)
            .field("retry", &self.retry)
            .finish()
    }
}

impl Gateway {
    /// No endpoint and no cassette: every call fails with
    /// [`LlmError::Unavailable`], so every agent takes its degraded path.
    pub fn offline() -> Self {
        Self {
            transport: None,
            cassette: None,
            mode: CassetteMode::Passthrough,
            retry: RetryPolicy::default(),
            permits: Semaphore::new(DEFAULT_PARALLELISM),
        }
    }

    /// Live calls with no recording.
    pub fn passthrough(transport: Arc<dyn Transport>) -> Self {
        Self { transport: Some(transport), ..Self::offline() }
    }

    /// Live calls, each successful response added to `cassette`.
    pub fn record(transport: Arc<dyn Transport>, cassette: Arc<Cassette>) -> Self {
        Self {
            transport: Some(transport),
            cassette: Some(cassette),
            mode: CassetteMode::Record,
            ..Self::offline()
        }
    }

    /// Serves responses from `cassette` only. An optional transport is held
    /// (so tests can assert it is never called) but never used.
    pub fn replay(cassette: Arc<Cassette>, transport: Option<Arc<dyn Transport>>) -> Self {
        Self { transport, cassette: Some(cassette), mode: CassetteMode::Replay, ..Self::offline() }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.permits = Semaphore::new(parallelism);
        self
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    pub fn cassette(&self) -> Option<&Arc<Cassette>> {
        self.cassette.as_ref()
    }

    pub fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let fp = fingerprint(req);
        let response = match self.mode {
            CassetteMode::Replay => {
                let cassette = self.cassette.as_ref().ok_or(LlmError::Unavailable)?;
                cassette
                    .get_loaded(&fp)
                    .cloned()
                    .or_else(|| cassette.get(&fp))
                    .ok_or(LlmError::ReplayMiss(fp))?
            }
            CassetteMode::Record | CassetteMode::Passthrough => {
                let response = self.call_with_retries(req)?;
                if let (CassetteMode::Record, Some(cassette)) = (self.mode, &self.cassette) {
                    cassette.insert(CassetteEntry::new(fp, req, response.clone()));
                }
                response
            }
        };
        finalize(req, response)
    }

    fn call_with_retries(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let transport = self.transport.as_ref().ok_or(LlmError::Unavailable)?;
        let mut last_error = String::new();
        for attempt in 1..=self.retry.max_attempts.max(1) {
            if attempt > 1 {
                std::thread::sleep(self.retry.delay_before(attempt));
            }
            let started = Instant::now();
            let result = {
                let _permit = self.permits.acquire();
                transport.send(req)
            };
            match result {
                Ok(text) => {
                    return Ok(LlmResponse {
                        text,
                        parsed: None,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempt,
                    })
                }
                Err(e) => {
                    log::warn!("{} request attempt {attempt} failed: {e}", req.role);
                    last_error = e.message;
                    if !e.retryable {
                        return Err(LlmError::Transport { attempts: attempt, message: last_error });
                    }
                }
            }
        }
        Err(LlmError::Transport { attempts: self.retry.max_attempts.max(1), message: last_error })
    }
}

fn finalize(req: &LlmRequest, mut response: LlmResponse) -> Result<LlmResponse, LlmError> {
    if req.response_format == ResponseFormat::JsonObject {
        match repair_json(&response.text) {
            Some(v) => response.parsed = Some(v),
            None => return Err(LlmError::StructuredOutput { text: response.text }),
        }
    }
    Ok(response)
}
