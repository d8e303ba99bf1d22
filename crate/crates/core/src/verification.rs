//! Passage-level judgments and their aggregation into a three-way verdict.
//!
//! Each judgment carries a quality weight (the passage's normalized hybrid
//! retrieval score). Support mass `S` and contradiction mass `C` are the
//! weighted confidences of supporting and contradicting judgments. The claim
//! is uncertain when neither mass reaches `tau_min`, true or false when one
//! leads by at least `tau_margin`, and uncertain otherwise.

use crate::corpus::Passage;
use crate::llm::{Gateway, LlmRequest, RoleTag};
use crate::prompts::Template;
use crate::retrieval::Evidence;
use crate::types::Verdict;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PassageLabel {
    Supports,
    Contradicts,
    Insufficient,
}

impl PassageLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PassageLabel::Supports => "supports",
            PassageLabel::Contradicts => "contradicts",
            PassageLabel::Insufficient => "insufficient",
        }
    }

    /// Recognizes the label and its common variants; anything else is `None`.
    pub fn parse(raw: &str) -> Option<Self> {
        match raw.trim().to_ascii_lowercase().replace(['_', '-'], " ").as_str() {
            "supports" | "support" | "supported" | "entails" | "true" => Some(PassageLabel::Supports),
            "contradicts" | "contradict" | "contradicted" | "refutes" | "refuted" | "false" => {
                Some(PassageLabel::Contradicts)
            }
            "insufficient" | "not enough info" | "neutral" | "unrelated" | "uncertain" => {
                Some(PassageLabel::Insufficient)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageJudgment {
    pub passage_id: String,
    pub label: PassageLabel,
    pub confidence: f64,
    pub reasoning_points: Vec<String>,
    pub quality_weight: f64,
    /// Set when the verifier call failed and the judgment is a placeholder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PassageJudgment {
    pub fn new(passage_id: &str, label: PassageLabel, confidence: f64, quality_weight: f64) -> Self {
        Self {
            passage_id: passage_id.to_string(),
            label,
            confidence: clamp_unit(confidence),
            reasoning_points: Vec::new(),
            quality_weight: clamp_unit(quality_weight),
            error: None,
        }
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub tau_min: f64,
    pub tau_margin: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { tau_min: 0.15, tau_margin: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateVerdict {
    pub label: Verdict,
    pub confidence: f64,
    pub support_mass: f64,
    pub contradiction_mass: f64,
    /// Sorted by passage id.
    pub judgments: Vec<PassageJudgment>,
}

fn clamp_unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

fn number(v: Option<&Value>) -> f64 {
    match v {
        Some(Value::Number(n)) => n.as_f64().unwrap_or(0.0),
        Some(Value::String(s)) => s.trim().parse().unwrap_or(0.0),
        _ => 0.0,
    }
}

fn string_list(v: Option<&Value>) -> Vec<String> {
    match v {
        Some(Value::Array(items)) => items.iter().filter_map(|i| i.as_str().map(str::to_string)).collect(),
        Some(Value::String(s)) if !s.is_empty() => vec![s.clone()],
        _ => Vec::new(),
    }
}

/// Reads `{label, confidence, key_points}` out of verifier output. An unknown
/// label becomes insufficient with confidence 0; confidence is clamped.
pub fn judgment_from_output(passage_id: &str, quality_weight: f64, output: &Value) -> PassageJudgment {
    let label = output.get("label").and_then(Value::as_str).and_then(PassageLabel::parse);
    let mut j = match label {
        Some(label) => PassageJudgment::new(passage_id, label, number(output.get("confidence")), quality_weight),
        None => PassageJudgment::new(passage_id, PassageLabel::Insufficient, 0.0, quality_weight),
    };
    j.reasoning_points = string_list(output.get("key_points").or_else(|| output.get("reasoning")));
    j
}

/// One verifier call comparing `claim` with `passage`. Failures yield an
/// insufficient, zero-confidence judgment with the error recorded.
pub fn judge_passage(gateway: &Gateway, claim: &str, passage: &Passage, quality_weight: f64) -> PassageJudgment {
    let (system, user) = Template::Verifier.render(&[
        ("claim", claim),
        ("passage_id", &passage.passage_id),
        ("passage", &passage.text),
    ]);
    match gateway.complete(&LlmRequest::new(RoleTag::Verifier, system, user).json()) {
        Ok(resp) => {
            judgment_from_output(&passage.passage_id, quality_weight, resp.parsed.as_ref().unwrap_or(&Value::Null))
        }
        Err(e) => {
            let mut j = PassageJudgment::new(&passage.passage_id, PassageLabel::Insufficient, 0.0, quality_weight);
            j.error = Some(e.to_string());
            j
        }
    }
}

/// Folds judgments (in passage-id order) into a verdict.
pub fn aggregate(mut judgments: Vec<PassageJudgment>, thresholds: &Thresholds) -> AggregateVerdict {
    judgments.sort_by(|a, b| a.passage_id.cmp(&b.passage_id));
    let mass = |label: PassageLabel| -> f64 {
        judgments
            .iter()
            .filter(|j| j.label == label)
            .map(|j| j.quality_weight * j.confidence)
            .fold(0.0, |acc, x| acc + x)
    };
    let (s, c) = (mass(PassageLabel::Supports), mass(PassageLabel::Contradicts));
    let (label, confidence) = if s.max(c) < thresholds.tau_min {
        (Verdict::Uncertain, 0.0)
    } else {
        let label = if s - c >= thresholds.tau_margin {
            Verdict::True
        } else if c - s >= thresholds.tau_margin {
            Verdict::False
        } else {
            Verdict::Uncertain
        };
        (label, clamp_unit((s - c).abs() / (s + c + 1e-9)))
    };
    AggregateVerdict { label, confidence, support_mass: s, contradiction_mass: c, judgments }
}

/// Judges every evidence passage (concurrently) and aggregates.
pub fn verify(gateway: &Gateway, claim: &str, evidence: &[Evidence], thresholds: &Thresholds) -> AggregateVerdict {
    let judgments: Vec<PassageJudgment> = evidence
        .par_iter()
        .map(|e| judge_passage(gateway, claim, &e.passage, e.hit.score_hybrid))
        .collect();
    aggregate(judgments, thresholds)
}
