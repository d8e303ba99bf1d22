//! Persona jury: four verifier personas judge one atomic claim against a
//! shared evidence bundle and their verdicts are combined by trust-weighted
//! voting.
//!
//! `trust_p = 0.4 * s_mean + 0.4 * c_p + 0.2 * [no error]`, where `s_mean`
//! is the mean hybrid score of the bundle, and
//! `Vote(v) = sum_p trust_p * c_p * [label_p = v]`.

use crate::llm::{Gateway, LlmRequest, RoleTag};
use crate::prompts::Template;
use crate::retrieval::Evidence;
use crate::types::Verdict;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Votes closer than this are a tie.
pub const TIE_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JuryError {
    #[error("vote over an empty jury")]
    Empty,
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonaId {
    StrictLegalist,
    OpenWebPragmatist,
    CausalSkeptic,
    ConspiracyDetector,
}

impl PersonaId {
    pub const ALL: [PersonaId; 4] = [
        PersonaId::StrictLegalist,
        PersonaId::OpenWebPragmatist,
        PersonaId::CausalSkeptic,
        PersonaId::ConspiracyDetector,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PersonaId::StrictLegalist => "strict_legalist",
            PersonaId::OpenWebPragmatist => "open_web_pragmatist",
            PersonaId::CausalSkeptic => "causal_skeptic",
            PersonaId::ConspiracyDetector => "conspiracy_detector",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            PersonaId::StrictLegalist => "Trusts only highly credible sources and wants independent confirmation.",
            PersonaId::OpenWebPragmatist => "Accepts broadly consistent evidence from ordinary web sources.",
            PersonaId::CausalSkeptic => "Checks temporal order, numbers and causal validity.",
            PersonaId::ConspiracyDetector => "Looks for signs of misinformation and manipulative framing.",
        }
    }

    pub fn template(self) -> Template {
        match self {
            PersonaId::StrictLegalist => Template::StrictLegalist,
            PersonaId::OpenWebPragmatist => Template::OpenWebPragmatist,
            PersonaId::CausalSkeptic => Template::CausalSkeptic,
            PersonaId::ConspiracyDetector => Template::ConspiracyDetector,
        }
    }
}

impl fmt::Display for PersonaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PersonaId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PersonaId::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown persona `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaVerdict {
    pub persona_id: PersonaId,
    pub label: Verdict,
    pub confidence: f64,
    pub explanation: String,
    pub error_free: bool,
    pub trust: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JuryDecision {
    pub label: Verdict,
    pub vote_scores: BTreeMap<Verdict, f64>,
    /// Sorted by persona id.
    pub persona_verdicts: Vec<PersonaVerdict>,
    /// Share of the total vote held by `label`; 0 when nobody voted.
    pub winning_confidence: f64,
    pub mean_hybrid_score: f64,
}

fn check_unit(name: &'static str, value: f64) -> Result<f64, JuryError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(JuryError::OutOfRange { name, value })
    }
}

pub fn trust_score(mean_hybrid: f64, confidence: f64, error_free: bool) -> Result<f64, JuryError> {
    let s = check_unit("mean hybrid score", mean_hybrid)?;
    let c = check_unit("confidence", confidence)?;
    Ok(0.4 * s + 0.4 * c + if error_free { 0.2 } else { 0.0 })
}

fn canonical_order(a: &PersonaVerdict, b: &PersonaVerdict) -> std::cmp::Ordering {
    a.persona_id
        .as_str()
        .cmp(b.persona_id.as_str())
        .then(a.label.cmp(&b.label))
        .then(a.confidence.total_cmp(&b.confidence))
        .then(a.trust.total_cmp(&b.trust))
}

/// Trust-weighted vote. Verdicts are summed in persona-id order; a tie for
/// the top score (within [`TIE_EPSILON`]) yields `Uncertain`.
pub fn vote(mut verdicts: Vec<PersonaVerdict>) -> Result<JuryDecision, JuryError> {
    if verdicts.is_empty() {
        return Err(JuryError::Empty);
    }
    verdicts.sort_by(canonical_order);
    let mut scores: BTreeMap<Verdict, f64> = Verdict::ALL.iter().map(|&v| (v, 0.0)).collect();
    for p in &verdicts {
        *scores.get_mut(&p.label).unwrap() += p.trust * p.confidence;
    }
    let mut ranked: Vec<(Verdict, f64)> = scores.iter().map(|(&v, &s)| (v, s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let label = if (ranked[0].1 - ranked[1].1).abs() <= TIE_EPSILON { Verdict::Uncertain } else { ranked[0].0 };
    let total: f64 = scores.values().sum();
    let winning_confidence = if total > 0.0 { scores[&label] / total } else { 0.0 };
    Ok(JuryDecision {
        label,
        vote_scores: scores,
        persona_verdicts: verdicts,
        winning_confidence,
        mean_hybrid_score: 0.0,
    })
}

/// Numbered evidence block shared by persona and explainer prompts.
pub fn format_evidence(evidence: &[Evidence]) -> String {
    if evidence.is_empty() {
        return "(no evidence retrieved)".to_string();
    }
    evidence
        .iter()
        .enumerate()
        .map(|(i, e)| {
            format!(
                "[{}] {} | {} | {}\n{}",
                i + 1,
                e.passage.passage_id,
                e.source_tier.as_str(),
                e.title,
                e.passage.text
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Mean normalized hybrid score of the bundle; 0 for an empty bundle.
pub fn mean_hybrid(evidence: &[Evidence]) -> f64 {
    if evidence.is_empty() {
        return 0.0;
    }
    let mean = evidence.iter().map(|e| e.hit.score_hybrid).sum::<f64>() / evidence.len() as f64;
    mean.clamp(0.0, 1.0)
}

/// One persona's judgment of `claim`; trust is left at 0. Any failure gives
/// `(uncertain, 0, error_free = false)`.
pub fn persona_verify(gateway: &Gateway, persona: PersonaId, claim: &str, evidence: &[Evidence]) -> PersonaVerdict {
    let failed = |explanation: String| PersonaVerdict {
        persona_id: persona,
        label: Verdict::Uncertain,
        confidence: 0.0,
        explanation,
        error_free: false,
        trust: 0.0,
    };
    let evidence_text = format_evidence(evidence);
    let (system, user) = persona.template().render(&[("claim", claim), ("evidence", &evidence_text)]);
    let req = LlmRequest::new(RoleTag::Persona(persona.as_str().to_string()), system, user).json();
    let resp = match gateway.complete(&req) {
        Ok(r) => r,
        Err(e) => return failed(e.to_string()),
    };
    let parsed = resp.parsed.unwrap_or(Value::Null);
    let Some(label) = parsed.get("label").and_then(Value::as_str).and_then(Verdict::parse_lenient) else {
        return failed(format!("unrecognized persona output: {}", resp.text));
    };
    let confidence = match parsed.get("confidence") {
        Some(Value::Number(n)) => n.as_f64().unwrap_or(0.0),
        Some(Value::String(s)) => s.trim().parse().unwrap_or(0.0),
        _ => 0.0,
    };
    PersonaVerdict {
        persona_id: persona,
        label,
        confidence: if confidence.is_nan() { 0.0 } else { confidence.clamp(0.0, 1.0) },
        explanation: parsed.get("explanation").and_then(Value::as_str).unwrap_or("").to_string(),
        error_free: true,
        trust: 0.0,
    }
}

/// Runs every persona over the same bundle (concurrently), assigns trust and
/// votes. An empty persona list yields an uncertain decision.
pub fn run_jury(gateway: &Gateway, personas: &[PersonaId], claim: &str, evidence: &[Evidence]) -> JuryDecision {
    let s_mean = mean_hybrid(evidence);
    let verdicts: Vec<PersonaVerdict> = personas
        .par_iter()
        .map(|&p| {
            let mut v = persona_verify(gateway, p, claim, evidence);
            v.trust = trust_score(s_mean, v.confidence, v.error_free).unwrap_or(0.0);
            v
        })
        .collect();
    let mut decision = vote(verdicts).unwrap_or_else(|_| JuryDecision {
        label: Verdict::Uncertain,
        vote_scores: Verdict::ALL.iter().map(|&v| (v, 0.0)).collect(),
        persona_verdicts: Vec::new(),
        winning_confidence: 0.0,
        mean_hybrid_score: 0.0,
    });
    decision.mean_hybrid_score = s_mean;
    decision
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ScriptRule, ScriptedTransport};
    use std::sync::Arc;

    fn pv(persona: PersonaId, label: Verdict, trust: f64, c: f64) -> PersonaVerdict {
        PersonaVerdict { persona_id: persona, label, confidence: c, explanation: String::new(), error_free: true, trust }
    }

    #[test]
    fn trust_examples() {
        assert!((trust_score(1.0, 1.0, true).unwrap() - 1.0).abs() < 1e-12);
        assert!((trust_score(0.5, 0.5, false).unwrap() - 0.4).abs() < 1e-12);
        assert!((trust_score(0.0, 0.0, true).unwrap() - 0.2).abs() < 1e-12);
        assert!(trust_score(1.2, 0.5, true).is_err());
        assert!(trust_score(0.5, -0.1, true).is_err());
    }

    #[test]
    fn worked_vote() {
        use PersonaId::*;
        let d = vote(vec![
            pv(StrictLegalist, Verdict::True, 0.8, 0.9),
            pv(OpenWebPragmatist, Verdict::True, 0.6, 0.5),
            pv(CausalSkeptic, Verdict::False, 0.9, 0.9),
        ])
        .unwrap();
        assert_eq!(d.label, Verdict::True);
        assert!((d.vote_scores[&Verdict::True] - 1.02).abs() < 1e-12);
        assert!((d.vote_scores[&Verdict::False] - 0.81).abs() < 1e-12);
        assert!((d.winning_confidence - 1.02 / 1.83).abs() < 1e-12);
        let ids: Vec<&str> = d.persona_verdicts.iter().map(|p| p.persona_id.as_str()).collect();
        assert_eq!(ids, vec!["causal_skeptic", "open_web_pragmatist", "strict_legalist"]);
    }

    #[test]
    fn unanimity_ties_and_empty() {
        let all_u: Vec<_> = PersonaId::ALL.iter().map(|&p| pv(p, Verdict::Uncertain, 0.6, 0.7)).collect();
        assert_eq!(vote(all_u).unwrap().label, Verdict::Uncertain);
        let tie = vec![
            pv(PersonaId::StrictLegalist, Verdict::True, 0.5, 0.8),
            pv(PersonaId::CausalSkeptic, Verdict::False, 0.8, 0.5),
        ];
        assert_eq!(vote(tie).unwrap().label, Verdict::Uncertain);
        let zero = vec![pv(PersonaId::StrictLegalist, Verdict::True, 0.5, 0.0)];
        let d = vote(zero).unwrap();
        assert_eq!((d.label, d.winning_confidence), (Verdict::Uncertain, 0.0));
        assert_eq!(vote(vec![]), Err(JuryError::Empty));
    }

    #[test]
    fn jury_over_gateway() {
        let gw = Gateway::passthrough(Arc::new(ScriptedTransport::new(vec![
            ScriptRule::new("persona:strict_legalist", &[], r#"{"label": "uncertain", "confidence": 0.6, "explanation": "not enough independent confirmations"}"#),
            ScriptRule::new("persona:*", &[], r#"{"label": "true", "confidence": 0.8, "explanation": "consistent"}"#),
        ])));
        let d = run_jury(&gw, &PersonaId::ALL, "claim", &[]);
        assert_eq!(d.persona_verdicts.len(), 4);
        assert_eq!(d.label, Verdict::True);
        let legalist = d.persona_verdicts.iter().find(|p| p.persona_id == PersonaId::StrictLegalist).unwrap();
        assert_eq!(legalist.label, Verdict::Uncertain);
        // Empty bundle: s_mean = 0, so trust = 0.4 * c + 0.2.
        assert!((legalist.trust - (0.4 * 0.6 + 0.2)).abs() < 1e-12);
    }

    #[test]
    fn persona_failure_is_flagged() {
        let v = persona_verify(&Gateway::offline(), PersonaId::CausalSkeptic, "c", &[]);
        assert_eq!((v.label, v.confidence, v.error_free), (Verdict::Uncertain, 0.0, false));
    }

    #[test]
    fn persona_ids_parse() {
        for p in PersonaId::ALL {
            assert_eq!(p.as_str().parse::<PersonaId>().unwrap(), p);
        }
    }
}
