//! Shared fixtures and model doubles for the integration tests.

#![allow(dead_code)]

use factcheck::corpus::{ChunkConfig, Corpus, SourceDocument};
use factcheck::llm::{
    Cassette, FnTransport, Gateway, LlmRequest, RetryPolicy, RoleTag, ScriptedTransport, Transport, TransportError,
};
use factcheck::pipeline::{Pipeline, PipelineConfig};
use factcheck::retrieval::{tokenize, Retriever};
use serde_json::json;
use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::Arc;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

pub fn load_docs(name: &str) -> Vec<SourceDocument> {
    read_fixture(name).lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).unwrap()).collect()
}

pub fn corpus(name: &str) -> Corpus {
    Corpus::build(load_docs(name), ChunkConfig::default()).unwrap()
}

pub fn news_corpus() -> Corpus {
    corpus("corpus_docs.jsonl")
}

pub fn script() -> Arc<ScriptedTransport> {
    Arc::new(ScriptedTransport::load(fixture("script.json")).unwrap())
}

pub fn scripted_pipeline(config: PipelineConfig) -> (Pipeline, Arc<ScriptedTransport>) {
    let transport = script();
    let gateway = Gateway::passthrough(transport.clone()).with_retry(RetryPolicy::no_delay());
    let retriever = Retriever::offline(&news_corpus()).unwrap();
    (Pipeline::new(config, retriever, gateway), transport)
}

pub type CountingTransport = FnTransport<fn(&LlmRequest) -> Result<String, TransportError>>;

/// Replays `cassette`; the attached transport only counts calls.
pub fn replay_pipeline(config: PipelineConfig, cassette: Cassette) -> (Pipeline, Arc<CountingTransport>) {
    let counter: Arc<CountingTransport> =
        Arc::new(FnTransport::new(|_req| Err(TransportError::fatal("network disabled in replay tests"))));
    let transport: Arc<dyn Transport> = counter.clone();
    let gateway = Gateway::replay(Arc::new(cassette), Some(transport));
    let retriever = Retriever::offline(&news_corpus()).unwrap();
    (Pipeline::new(config, retriever, gateway), counter)
}

pub const ARTICLE_CLAIM_1: &str = "The Labor Department reported that unemployment fell to 3.9% in 2024.";
pub const ARTICLE_CLAIM_2: &str = "Officials in Ohio confirmed $2 million in new grants.";
pub const CONJUNCTIVE: &str = "The minimum wage rose in 2023 and unemployment fell in 2024.";
pub const DISJUNCTIVE: &str = "Either the minimum wage rose in 2023 or unemployment fell in 2024.";
pub const THREE_ATOMS: &str = "Wages rose in 2023, and exports grew or the harbor was dredged.";

const STOPWORDS: &[&str] = &[
    "the", "and", "for", "that", "this", "with", "from", "have", "been", "more", "than", "over", "into", "our", "were",
    "was", "are", "not", "all", "any", "its", "their", "they", "every", "last", "year", "years", "most", "state",
];

fn content_words(text: &str) -> HashSet<String> {
    tokenize(text).into_iter().filter(|t| t.len() >= 3 && !STOPWORDS.contains(&t.as_str())).collect()
}

fn section<'a>(prompt: &'a str, head: &str, next: Option<&str>) -> &'a str {
    let start = prompt.find(head).map(|i| i + head.len()).unwrap_or(prompt.len());
    let rest = &prompt[start..];
    match next.and_then(|n| rest.find(n)) {
        Some(end) => &rest[..end],
        None => rest,
    }
}

/// Answers from the evidence it is shown: a persona commits to a label only
/// when at least 60% of the claim's content words occur in the evidence
/// bundle, and abstains otherwise. The decomposer keeps claims whole.
pub fn grounded_model(req: &LlmRequest) -> Result<String, TransportError> {
    let prompt = &req.user_prompt;
    match &req.role {
        RoleTag::Decomposer => {
            let claim = section(prompt, "CLAIM: ", None).trim();
            Ok(json!({
                "atomic_claims": [{"id": "C1", "text": claim}],
                "formula": "C1",
                "causal_edges": [],
                "complexity": 0.1
            })
            .to_string())
        }
        RoleTag::Persona(_) => {
            let claim = section(prompt, "CLAIM: ", Some("\n")).trim();
            let evidence = section(prompt, "EVIDENCE:", None).to_lowercase();
            let words = content_words(claim);
            let found = content_words(&evidence);
            let covered = words.iter().filter(|w| found.contains(*w)).count();
            let coverage = if words.is_empty() { 0.0 } else { covered as f64 / words.len() as f64 };
            let reply = if coverage < 0.6 {
                json!({"label": "uncertain", "confidence": 0.3, "explanation": "The evidence does not cover the claim."})
            } else if claim.to_lowercase().contains("never") || evidence.contains("denied") {
                json!({"label": "false", "confidence": 0.8, "explanation": "The evidence contradicts the claim [1]."})
            } else {
                json!({"label": "true", "confidence": 0.8, "explanation": "The evidence states this directly [1]."})
            };
            Ok(reply.to_string())
        }
        RoleTag::Verifier => Ok(json!({"label": "insufficient", "confidence": 0.1}).to_string()),
        RoleTag::Extractor | RoleTag::Explainer => Err(TransportError::fatal("not used by the benchmark")),
    }
}
