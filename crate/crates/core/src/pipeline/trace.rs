//! Append-only, line-delimited log of intermediate pipeline states.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("no trace for run `{0}`")]
    NotFound(String),
    #[error("trace line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Extract,
    Retrieve,
    Judge,
    Aggregate,
    Decompose,
    Persona,
    Vote,
    Logic,
    Explain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub run_id: String,
    pub seq: u64,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_id: Option<String>,
    pub timestamp_ms: u64,
    /// First 16 hex digits of SHA-256 over the stage input.
    pub input_digest: String,
    pub payload: Value,
}

pub fn digest(input: &str) -> String {
    hex::encode(&Sha256::digest(input.as_bytes())[..8])
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Events buffered by one unit of work (one claim) before they are given
/// sequence numbers, so concurrent claims still log in a fixed order.
#[derive(Debug, Default, Clone)]
pub struct EventBuffer {
    claim_id: Option<String>,
    pending: Vec<(Stage, u64, String, Value)>,
}

impl EventBuffer {
    pub fn for_claim(claim_id: &str) -> Self {
        Self { claim_id: Some(claim_id.to_string()), pending: Vec::new() }
    }

    pub fn push(&mut self, stage: Stage, input: &str, payload: Value) {
        self.pending.push((stage, now_ms(), digest(input), payload));
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }
}

struct WriterState {
    seq: u64,
    events: Vec<TraceEvent>,
    file: Option<File>,
}

/// Assigns sequence numbers and keeps every event in memory; optionally
/// mirrors them to `<dir>/<run_id>.jsonl`.
pub struct TraceWriter {
    run_id: String,
    state: Mutex<WriterState>,
}

impl TraceWriter {
    pub fn in_memory(run_id: &str) -> Self {
        Self { run_id: run_id.to_string(), state: Mutex::new(WriterState { seq: 0, events: Vec::new(), file: None }) }
    }

    /// Creates (or replaces) the log file for `run_id` in `dir`.
    pub fn to_dir(dir: impl AsRef<Path>, run_id: &str) -> Result<Self, TraceError> {
        std::fs::create_dir_all(dir.as_ref())?;
        let file = File::create(trace_path(dir, run_id))?;
        let writer = Self::in_memory(run_id);
        writer.state.lock().unwrap().file = Some(file);
        Ok(writer)
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn append(&self, buffer: EventBuffer) -> Result<(), TraceError> {
        let mut state = self.state.lock().unwrap();
        for (stage, timestamp_ms, input_digest, payload) in buffer.pending {
            let event = TraceEvent {
                run_id: self.run_id.clone(),
                seq: state.seq,
                stage,
                claim_id: buffer.claim_id.clone(),
                timestamp_ms,
                input_digest,
                payload,
            };
            state.seq += 1;
            if let Some(file) = state.file.as_mut() {
                let line = serde_json::to_string(&event).expect("event serializes");
                writeln!(file, "{line}")?;
            }
            state.events.push(event);
        }
        Ok(())
    }

    pub fn events(&self) -> Vec<TraceEvent> {
        self.state.lock().unwrap().events.clone()
    }
}

pub fn trace_path(dir: impl AsRef<Path>, run_id: &str) -> PathBuf {
    dir.as_ref().join(format!("{run_id}.jsonl"))
}

/// Reads the ordered event stream of `run_id` from `dir`.
pub fn trace_read(dir: impl AsRef<Path>, run_id: &str) -> Result<Vec<TraceEvent>, TraceError> {
    let path = trace_path(dir, run_id);
    let file = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(TraceError::NotFound(run_id.to_string())),
        Err(e) => return Err(e.into()),
    };
    read_events(BufReader::new(file))
}

pub fn read_events(reader: impl BufRead) -> Result<Vec<TraceEvent>, TraceError> {
    let mut events: Vec<TraceEvent> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: TraceEvent = serde_json::from_str(&line)
            .map_err(|e| TraceError::Malformed { line: i + 1, message: e.to_string() })?;
        events.push(event);
    }
    events.sort_by_key(|e| e.seq);
    Ok(events)
}
