//! Record/replay storage for model responses, keyed by request fingerprint.
//!
//! File format: one JSON object per line,
//! `{"fingerprint": .., "request": {role_tag, temperature, user_prompt_head}, "response": {..}}`,
//! sorted by fingerprint.

use super::{LlmError, LlmRequest, LlmResponse};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CassetteMode {
    Record,
    #[default]
    Replay,
    Passthrough,
}

impl std::str::FromStr for CassetteMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "record" => Ok(CassetteMode::Record),
            "replay" => Ok(CassetteMode::Replay),
            "passthrough" => Ok(CassetteMode::Passthrough),
            other => Err(format!("unknown cassette mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSummary {
    pub role_tag: String,
    pub temperature: f64,
    pub user_prompt_head: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub request: RequestSummary,
    pub response: LlmResponse,
}

impl CassetteEntry {
    pub fn new(fingerprint: String, request: &LlmRequest, response: LlmResponse) -> Self {
        Self {
            fingerprint,
            request: RequestSummary {
                role_tag: request.role.to_string(),
                temperature: request.temperature,
                user_prompt_head: request.user_prompt.chars().take(160).collect(),
            },
            response,
        }
    }
}

/// Loaded entries are immutable and read without locking; entries recorded
/// during this session go to a separate synchronized map.
#[derive(Debug, Default)]
pub struct Cassette {
    loaded: BTreeMap<String, CassetteEntry>,
    recorded: Mutex<BTreeMap<String, CassetteEntry>>,
}

impl Cassette {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = CassetteEntry>) -> Self {
        Self {
            loaded: entries.into_iter().map(|e| (e.fingerprint.clone(), e)).collect(),
            recorded: Mutex::default(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let file = File::open(path.as_ref())
            .map_err(|e| LlmError::Cassette(format!("{}: {e}", path.as_ref().display())))?;
        Self::read_from(BufReader::new(file))
    }

    pub fn read_from(reader: impl BufRead) -> Result<Self, LlmError> {
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| LlmError::Cassette(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(&line)
                .map_err(|e| LlmError::Cassette(format!("line {}: {e}", i + 1)))?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn get(&self, fingerprint: &str) -> Option<LlmResponse> {
        if let Some(e) = self.loaded.get(fingerprint) {
            return Some(e.response.clone());
        }
        self.recorded.lock().unwrap().get(fingerprint).map(|e| e.response.clone())
    }

    /// Lock-free lookup restricted to loaded entries.
    pub fn get_loaded(&self, fingerprint: &str) -> Option<&LlmResponse> {
        self.loaded.get(fingerprint).map(|e| &e.response)
    }

    pub fn insert(&self, entry: CassetteEntry) {
        self.recorded.lock().unwrap().insert(entry.fingerprint.clone(), entry);
    }

    /// All entries, recorded ones overriding loaded ones.
    pub fn entries(&self) -> BTreeMap<String, CassetteEntry> {
        let mut all = self.loaded.clone();
        all.extend(self.recorded.lock().unwrap().clone());
        all
    }

    pub fn len(&self) -> usize {
        self.entries().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<(), LlmError> {
        for entry in self.entries().values() {
            let line = serde_json::to_string(entry).map_err(|e| LlmError::Cassette(e.to_string()))?;
            writeln!(out, "{line}").map_err(|e| LlmError::Cassette(e.to_string()))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LlmError> {
        let file = File::create(path.as_ref())
            .map_err(|e| LlmError::Cassette(format!("{}: {e}", path.as_ref().display())))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush().map_err(|e| LlmError::Cassette(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{fingerprint, RoleTag};

    #[test]
    fn save_load_identical_entries() {
        let cassette = Cassette::new();
        for (i, role) in [RoleTag::Verifier, RoleTag::Persona("causal_skeptic".into())].into_iter().enumerate() {
            let req = LlmRequest::new(role, "sys", format!("prompt {i}"));
            let resp = LlmResponse { text: format!("{{\"n\": {i}}}"), parsed: None, latency_ms: 3, attempt: 1 };
            cassette.insert(CassetteEntry::new(fingerprint(&req), &req, resp));
        }
        let mut buf = Vec::new();
        cassette.write_to(&mut buf).unwrap();
        let loaded = Cassette::read_from(&buf[..]).unwrap();
        assert_eq!(loaded.entries(), cassette.entries());
        assert_eq!(loaded.len(), 2);
    }

    #[test]
    fn malformed_line_is_reported() {
        let err = Cassette::read_from(&b"{\"fingerprint\": 1}\n"[..]).unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
