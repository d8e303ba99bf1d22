//! Deterministic in-process transports for fixtures, demos and tests. Both
//! count how many times they were invoked.

use super::{LlmRequest, Transport, TransportError};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Answers a request whose role tag equals `role` (or starts with it when
/// `role` ends in `*`) and whose user prompt contains every `contains` string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub role: String,
    #[serde(default)]
    pub contains: Vec<String>,
    pub response: String,
}

impl ScriptRule {
    pub fn new(role: &str, contains: &[&str], response: &str) -> Self {
        Self {
            role: role.to_string(),
            contains: contains.iter().map(|s| s.to_string()).collect(),
            response: response.to_string(),
        }
    }

    fn matches(&self, req: &LlmRequest) -> bool {
        let tag = req.role.to_string();
        let role_ok = match self.role.strip_suffix('*') {
            Some(prefix) => tag.starts_with(prefix),
            None => tag == self.role,
        };
        role_ok && self.contains.iter().all(|needle| req.user_prompt.contains(needle.as_str()))
    }
}

/// First matching rule wins; no match is a non-retryable failure.
#[derive(Debug, Default)]
pub struct ScriptedTransport {
    rules: Vec<ScriptRule>,
    calls: AtomicUsize,
}

impl ScriptedTransport {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        Self { rules, calls: AtomicUsize::new(0) }
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let rules: Vec<ScriptRule> = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self::new(rules))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, request: &LlmRequest) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.rules
            .iter()
            .find(|r| r.matches(request))
            .map(|r| r.response.clone())
            .ok_or_else(|| TransportError::fatal(format!("no scripted response for {}", request.role)))
    }
}

/// Wraps a closure as a transport.
pub struct FnTransport<F> {
    f: F,
    calls: AtomicUsize,
}

impl<F> FnTransport<F>
where
    F: Fn(&LlmRequest) -> Result<String, TransportError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> Transport for FnTransport<F>
where
    F: Fn(&LlmRequest) -> Result<String, TransportError> + Send + Sync,
{
    fn send(&self, request: &LlmRequest) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.f)(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::RoleTag;

    #[test]
    fn rule_matching() {
        let t = ScriptedTransport::new(vec![
            ScriptRule::new("persona:*", &["wages"], "persona-wages"),
            ScriptRule::new("verifier", &["wages", "2024"], "both"),
            ScriptRule::new("verifier", &[], "fallback"),
        ]);
        let send = |role: RoleTag, prompt: &str| t.send(&LlmRequest::new(role, "", prompt));
        assert_eq!(send(RoleTag::Verifier, "wages in 2024").unwrap(), "both");
        assert_eq!(send(RoleTag::Verifier, "wages").unwrap(), "fallback");
        assert_eq!(send(RoleTag::Persona("causal_skeptic".into()), "wages").unwrap(), "persona-wages");
        assert!(send(RoleTag::Explainer, "x").is_err());
        assert_eq!(t.calls(), 4);
    }
}
