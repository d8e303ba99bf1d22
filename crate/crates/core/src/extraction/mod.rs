//! Claim extraction: an entity heuristic, a claim-verb pattern and an
//! optional model extractor, run in a fixed order and merged.
//!
//! A sentence becomes a claim when the entity and pattern heuristics both
//! fire (or either, with [`ExtractionConfig::either_heuristic`]) or when the
//! model returns it. Duplicates by normalized text, and claims contained in
//! a longer claim, are merged.

mod entities;
mod patterns;
mod sentences;

pub use entities::{find_entities, Entity, EntityKind};
pub use patterns::{find_claim_verb, lemma_candidates, VerbMatch};
pub use sentences::{split_sentences, Sentence};

use crate::llm::{Gateway, LlmError, LlmRequest, RoleTag};
use crate::prompts::{claim_verb_lexicon, Template};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeSet, HashSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extractor {
    Entity,
    Pattern,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub claim_id: String,
    pub text: String,
    pub source_sentence_index: usize,
    pub extractors: BTreeSet<Extractor>,
    pub entities: Vec<Entity>,
}

/// Swappable linguistic analysis. The default is [`HeuristicAnalyzer`].
pub trait Analyzer: Send + Sync {
    fn entities(&self, sentence: &str) -> Vec<Entity>;
    fn claim_verb(&self, sentence: &str) -> Option<VerbMatch>;
}

#[derive(Debug, Clone)]
pub struct HeuristicAnalyzer {
    lexicon: Vec<String>,
}

impl Default for HeuristicAnalyzer {
    fn default() -> Self {
        Self { lexicon: claim_verb_lexicon() }
    }
}

impl HeuristicAnalyzer {
    pub fn with_lexicon(lexicon: Vec<String>) -> Self {
        Self { lexicon }
    }
}

impl Analyzer for HeuristicAnalyzer {
    fn entities(&self, sentence: &str) -> Vec<Entity> {
        find_entities(sentence)
    }

    fn claim_verb(&self, sentence: &str) -> Option<VerbMatch> {
        find_claim_verb(sentence, &self.lexicon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    /// Accept a sentence when either heuristic fires instead of both.
    pub either_heuristic: bool,
    /// Skip the model extractor even when a gateway is available.
    pub heuristics_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInvocation {
    pub tool: Extractor,
    pub sentence_index: Option<usize>,
    pub output: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupDecision {
    pub kept: String,
    pub dropped: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionTrace {
    pub invocations: Vec<ToolInvocation>,
    pub dedup: Vec<DedupDecision>,
}

/// Casefolded, punctuation-free, single-spaced form used for dedup.
pub fn normalize_claim(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn contained_in(small: &str, big: &str) -> bool {
    !small.is_empty() && format!(" {big} ").contains(&format!(" {small} "))
}

/// Asks the model for the factual claims in `text`. Accepts either a bare
/// array or `{"claims": [...]}`; array items may be strings or objects with a
/// `text` field.
pub fn llm_tool(gateway: &Gateway, text: &str) -> Result<Vec<String>, LlmError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let (system, user) = Template::Extractor.render(&[("text", text)]);
    let resp = gateway.complete(&LlmRequest::new(RoleTag::Extractor, system, user).json())?;
    let parsed = resp.parsed.unwrap_or(Value::Null);
    let items = match &parsed {
        Value::Array(items) => items,
        Value::Object(map) => match map.get("claims") {
            Some(Value::Array(items)) => items,
            _ => return Err(LlmError::StructuredOutput { text: resp.text }),
        },
        _ => return Err(LlmError::StructuredOutput { text: resp.text }),
    };
    Ok(items
        .iter()
        .filter_map(|item| match item {
            Value::String(s) => Some(s.trim().to_string()),
            Value::Object(o) => o.get("text").and_then(Value::as_str).map(|s| s.trim().to_string()),
            _ => None,
        })
        .filter(|s| !s.is_empty())
        .collect())
}

struct Candidate {
    text: String,
    key: String,
    sentence_index: usize,
    extractors: BTreeSet<Extractor>,
}

/// Sentence a model claim most plausibly came from: containment first, then
/// largest word overlap, else past the last sentence.
fn locate(claim_key: &str, sentences: &[Sentence]) -> usize {
    let keys: Vec<String> = sentences.iter().map(|s| normalize_claim(&s.text)).collect();
    if let Some(i) = keys.iter().position(|k| contained_in(claim_key, k) || contained_in(k, claim_key)) {
        return i;
    }
    let words: HashSet<&str> = claim_key.split(' ').collect();
    let mut best = (0usize, sentences.len());
    for (i, k) in keys.iter().enumerate() {
        let overlap = k.split(' ').collect::<HashSet<_>>().intersection(&words).count();
        if overlap > best.0 {
            best = (overlap, i);
        }
    }
    best.1
}

pub struct ClaimExtractor<'a> {
    analyzer: Box<dyn Analyzer + 'a>,
    gateway: Option<&'a Gateway>,
    config: ExtractionConfig,
}

impl<'a> ClaimExtractor<'a> {
    pub fn new(gateway: Option<&'a Gateway>, config: ExtractionConfig) -> Self {
        Self { analyzer: Box::new(HeuristicAnalyzer::default()), gateway, config }
    }

    pub fn with_analyzer(mut self, analyzer: impl Analyzer + 'a) -> Self {
        self.analyzer = Box::new(analyzer);
        self
    }

    pub fn extract(&self, text: &str) -> (Vec<Claim>, ExtractionTrace) {
        let mut trace = ExtractionTrace::default();
        let sentences = split_sentences(text);
        let mut candidates = Vec::new();

        for s in &sentences {
            let ents = self.analyzer.entities(&s.text);
            let verb = self.analyzer.claim_verb(&s.text);
            trace.invocations.push(ToolInvocation {
                tool: Extractor::Entity,
                sentence_index: Some(s.index),
                output: serde_json::to_value(&ents).unwrap_or(Value::Null),
                error: None,
            });
            trace.invocations.push(ToolInvocation {
                tool: Extractor::Pattern,
                sentence_index: Some(s.index),
                output: serde_json::to_value(&verb).unwrap_or(Value::Null),
                error: None,
            });
            let (e, p) = (!ents.is_empty(), verb.is_some());
            let fires = if self.config.either_heuristic { e || p } else { e && p };
            if fires {
                let mut extractors = BTreeSet::new();
                if e {
                    extractors.insert(Extractor::Entity);
                }
                if p {
                    extractors.insert(Extractor::Pattern);
                }
                candidates.push(Candidate {
                    text: s.text.clone(),
                    key: normalize_claim(&s.text),
                    sentence_index: s.index,
                    extractors,
                });
            }
        }

        if let (Some(gateway), false) = (self.gateway, self.config.heuristics_only) {
            match llm_tool(gateway, text) {
                Ok(claims) => {
                    trace.invocations.push(ToolInvocation {
                        tool: Extractor::Llm,
                        sentence_index: None,
                        output: serde_json::to_value(&claims).unwrap_or(Value::Null),
                        error: None,
                    });
                    for c in claims {
                        let key = normalize_claim(&c);
                        if key.is_empty() {
                            continue;
                        }
                        candidates.push(Candidate {
                            sentence_index: locate(&key, &sentences),
                            text: c,
                            key,
                            extractors: BTreeSet::from([Extractor::Llm]),
                        });
                    }
                }
                Err(e) => trace.invocations.push(ToolInvocation {
                    tool: Extractor::Llm,
                    sentence_index: None,
                    output: Value::Array(Vec::new()),
                    error: Some(e.to_string()),
                }),
            }
        }

        let mut kept: Vec<Candidate> = Vec::new();
        for c in candidates {
            let hit = kept.iter().position(|k| {
                k.key == c.key || contained_in(&c.key, &k.key) || contained_in(&k.key, &c.key)
            });
            let Some(i) = hit else {
                kept.push(c);
                continue;
            };
            let k = &mut kept[i];
            let reason = if k.key == c.key { "duplicate" } else { "contained" };
            k.extractors.extend(c.extractors.iter().copied());
            if c.key.len() > k.key.len() {
                trace.dedup.push(DedupDecision { kept: c.text.clone(), dropped: k.text.clone(), reason: reason.into() });
                k.text = c.text;
                k.key = c.key;
                k.sentence_index = k.sentence_index.min(c.sentence_index);
            } else {
                trace.dedup.push(DedupDecision { kept: k.text.clone(), dropped: c.text, reason: reason.into() });
            }
        }

        kept.sort_by(|a, b| a.sentence_index.cmp(&b.sentence_index).then_with(|| a.text.cmp(&b.text)));
        let claims = kept
            .into_iter()
            .enumerate()
            .map(|(n, c)| Claim {
                claim_id: format!("claim-{}", n + 1),
                entities: self.analyzer.entities(&c.text),
                text: c.text,
                source_sentence_index: c.sentence_index,
                extractors: c.extractors,
            })
            .collect();
        (claims, trace)
    }
}

/// Heuristics plus (when `gateway` is given) the model extractor, default config.
pub fn extract(text: &str, gateway: Option<&Gateway>) -> (Vec<Claim>, ExtractionTrace) {
    ClaimExtractor::new(gateway, ExtractionConfig::default()).extract(text)
}
