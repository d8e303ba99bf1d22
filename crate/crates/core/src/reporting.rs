//! Fact-check reports: numbered citations, a grounded narrative and two
//! renderings (structured JSON and plain text).
//!
//! The machine fields of a report come from upstream stages only. The
//! narrative is presentation; when the explainer is unavailable or cites a
//! passage number that does not exist, a deterministic template is used.

use crate::decomposition::Decomposition;
use crate::jury::JuryDecision;
use crate::llm::{Gateway, LlmRequest, RoleTag};
use crate::logic::TruthValue;
use crate::prompts::Template;
use crate::corpus::SourceTier;
use crate::retrieval::Evidence;
use crate::types::{Mode, Verdict};
use crate::verification::AggregateVerdict;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::sync::OnceLock;

pub const REPORT_SCHEMA_VERSION: &str = "factcheck-report/v1";

pub const INSUFFICIENCY_CLAUSE: &str =
    "The available evidence is insufficient to support or refute this claim.";

pub const NO_EVIDENCE_NOTICE: &str = "No evidence passages were retrieved for this claim.";

const QUOTE_CHARS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Citation {
    pub number: usize,
    pub passage_id: String,
    pub title: String,
    pub url: Option<String>,
    pub source_tier: SourceTier,
    pub quote: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NarrativeSource {
    Model,
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomReport {
    pub atom_id: String,
    pub text: String,
    pub citation_numbers: Vec<usize>,
    pub decision: JuryDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearchExtras {
    pub decomposition: Decomposition,
    pub atoms: Vec<AtomReport>,
    pub formula_value: Option<TruthValue>,
    pub logic_fallback_used: bool,
    pub logic_fallback_reason: Option<String>,
    /// The claim fell under the adaptive complexity cutoff and was checked by
    /// the baseline verifier; `atoms` is then empty.
    #[serde(default)]
    pub routed_to_baseline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactCheckReport {
    pub schema_version: String,
    pub claim_id: String,
    pub claim: String,
    pub mode: Mode,
    pub verdict: Verdict,
    pub confidence: f64,
    pub summary: String,
    pub explanation: String,
    pub narrative_source: NarrativeSource,
    pub citations: Vec<Citation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
    /// Baseline verification details; also present for claims routed to the
    /// baseline verifier in research mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<AggregateVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub research: Option<ResearchExtras>,
    pub trace_id: String,
}

fn quote(text: &str) -> String {
    if text.chars().count() <= QUOTE_CHARS {
        return text.to_string();
    }
    let cut: String = text.chars().take(QUOTE_CHARS).collect();
    let trimmed = cut.rsplit_once(' ').map(|(head, _)| head).unwrap_or(&cut);
    format!("{trimmed} ...")
}

/// Evidence in rank order as citations numbered from 1; repeated passages
/// collapse into their first occurrence.
pub fn build_citations(evidence: &[Evidence]) -> Vec<Citation> {
    let mut ordered: Vec<&Evidence> = evidence.iter().collect();
    ordered.sort_by_key(|e| e.hit.rank);
    append_citations(Vec::new(), ordered)
}

/// Adds citations for passages not yet cited, continuing the numbering.
pub fn append_citations<'a>(mut citations: Vec<Citation>, evidence: impl IntoIterator<Item = &'a Evidence>) -> Vec<Citation> {
    let mut seen: HashSet<String> = citations.iter().map(|c| c.passage_id.clone()).collect();
    for e in evidence {
        if !seen.insert(e.passage.passage_id.clone()) {
            continue;
        }
        citations.push(Citation {
            number: citations.len() + 1,
            passage_id: e.passage.passage_id.clone(),
            title: e.title.clone(),
            url: e.url.clone(),
            source_tier: e.source_tier,
            quote: quote(&e.passage.text),
        });
    }
    citations
}

pub fn citation_number(citations: &[Citation], passage_id: &str) -> Option<usize> {
    citations.iter().find(|c| c.passage_id == passage_id).map(|c| c.number)
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[(\d+)\]").unwrap())
}

/// Citation numbers referenced as `[k]` in `text`, in order of appearance.
pub fn citation_markers(text: &str) -> Vec<usize> {
    marker_regex()
        .captures_iter(text)
        .filter_map(|c| c[1].parse().ok())
        .collect()
}

/// Everything the explainer is allowed to see.
#[derive(Debug, Clone, PartialEq)]
pub struct NarrativeInput<'a> {
    pub claim: &'a str,
    pub verdict: Verdict,
    pub confidence: f64,
    pub citations: &'a [Citation],
    /// Intermediate judgments, one per line, citing passages as `[k]`.
    pub judgment_lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Narrative {
    pub summary: String,
    pub explanation: String,
    pub source: NarrativeSource,
}

/// Deterministic narrative built from structured data alone.
pub fn template_narrative(input: &NarrativeInput) -> Narrative {
    let summary = match input.verdict {
        Verdict::Uncertain => format!("The claim could not be verified. {INSUFFICIENCY_CLAUSE}"),
        v => format!("The claim is rated {v} with confidence {:.2}.", input.confidence),
    };
    let mut lines = Vec::new();
    if input.citations.is_empty() {
        lines.push(NO_EVIDENCE_NOTICE.to_string());
    }
    lines.extend(input.judgment_lines.iter().cloned());
    if input.verdict == Verdict::Uncertain {
        lines.push(INSUFFICIENCY_CLAUSE.to_string());
    }
    Narrative { summary, explanation: lines.join("\n"), source: NarrativeSource::Template }
}

fn grounded(text: &str, n: usize) -> bool {
    citation_markers(text).iter().all(|&k| (1..=n).contains(&k))
}

/// Asks the explainer for a narrative; falls back to the template when the
/// call fails, the output lacks either field, a marker points at a missing
/// citation, or evidence exists but nothing is cited.
pub fn generate_narrative(gateway: &Gateway, input: &NarrativeInput) -> Narrative {
    let evidence = if input.citations.is_empty() {
        "(no evidence retrieved)".to_string()
    } else {
        input
            .citations
            .iter()
            .map(|c| format!("[{}] {}\n{}", c.number, c.title, c.quote))
            .collect::<Vec<_>>()
            .join("\n\n")
    };
    let judgments = if input.judgment_lines.is_empty() { "(none)".to_string() } else { input.judgment_lines.join("\n") };
    let confidence = format!("{:.2}", input.confidence);
    let (system, user) = Template::Explainer.render(&[
        ("claim", input.claim),
        ("verdict", input.verdict.as_str()),
        ("confidence", &confidence),
        ("evidence", &evidence),
        ("judgments", &judgments),
    ]);
    let Ok(resp) = gateway.complete(&LlmRequest::new(RoleTag::Explainer, system, user).json()) else {
        return template_narrative(input);
    };
    let parsed = resp.parsed.unwrap_or(Value::Null);
    let field = |k: &str| parsed.get(k).and_then(Value::as_str).map(str::trim).filter(|s| !s.is_empty());
    let (Some(summary), Some(explanation)) = (field("summary"), field("explanation")) else {
        return template_narrative(input);
    };
    let n = input.citations.len();
    let cites_something = n == 0 || !citation_markers(explanation).is_empty();
    if !grounded(summary, n) || !grounded(explanation, n) || !cites_something {
        return template_narrative(input);
    }
    let mut explanation = explanation.to_string();
    if input.verdict == Verdict::Uncertain && !explanation.to_lowercase().contains("insufficient") {
        explanation.push(' ');
        explanation.push_str(INSUFFICIENCY_CLAUSE);
    }
    Narrative { summary: summary.to_string(), explanation, source: NarrativeSource::Model }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Structured,
    HumanReadable,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "structured" | "json" => Ok(ReportFormat::Structured),
            "human" | "human_readable" | "text" => Ok(ReportFormat::HumanReadable),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

pub fn render(report: &FactCheckReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Structured => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::HumanReadable => render_text(report),
    }
}

pub fn parse_structured(text: &str) -> Result<FactCheckReport, serde_json::Error> {
    serde_json::from_str(text)
}

fn render_text(r: &FactCheckReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "CLAIM [{}]: {}", r.claim_id, r.claim);
    let _ = writeln!(out, "VERDICT: {} (confidence {:.3})", r.verdict, r.confidence);
    let _ = writeln!(out, "MODE: {}", r.mode);
    if let Some(notice) = &r.notice {
        let _ = writeln!(out, "NOTICE: {notice}");
    }
    let _ = writeln!(out, "\nSUMMARY\n{}", r.summary);
    let _ = writeln!(out, "\nEXPLANATION\n{}", r.explanation);
    let _ = writeln!(out, "\nCITATIONS");
    if r.citations.is_empty() {
        let _ = writeln!(out, "(none)");
    }
    for c in &r.citations {
        let url = c.url.as_deref().map(|u| format!(" <{u}>")).unwrap_or_default();
        let _ = writeln!(out, "[{}] {} ({}){url} {}", c.number, c.title, c.source_tier.as_str(), c.passage_id);
        let _ = writeln!(out, "    \"{}\"", c.quote);
    }
    if let Some(v) = &r.verification {
        let _ = writeln!(out, "\nVERIFICATION");
        let _ = writeln!(out, "support mass {:.4}, contradiction mass {:.4}", v.support_mass, v.contradiction_mass);
        for j in &v.judgments {
            let k = citation_number(&r.citations, &j.passage_id).map(|k| format!("[{k}]")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{k} {} {} confidence {:.2} weight {:.3}",
                j.passage_id,
                j.label.as_str(),
                j.confidence,
                j.quality_weight
            );
        }
    }
    if let Some(x) = &r.research {
        let d = &x.decomposition;
        let _ = writeln!(out, "\nDECOMPOSITION");
        let _ = writeln!(out, "formula: {}", d.formula);
        let _ = writeln!(out, "complexity: {:.2}", d.complexity);
        if d.fallback_used {
            let _ = writeln!(out, "decomposer fallback: single atom");
        }
        for (a, b) in &d.causal_edges {
            let _ = writeln!(out, "causal edge: {a} -> {b}");
        }
        let value = x.formula_value.map(|v| format!("{v:?}")).unwrap_or_else(|| "n/a".into());
        let _ = writeln!(out, "formula value: {value}");
        if x.logic_fallback_used {
            let reason = x.logic_fallback_reason.as_deref().unwrap_or("");
            let _ = writeln!(out, "logic fallback: majority vote ({reason})");
        }
        for atom in &x.atoms {
            let cites: Vec<String> = atom.citation_numbers.iter().map(|k| format!("[{k}]")).collect();
            let _ = writeln!(
                out,
                "\n{}: {}\n  jury: {} (confidence {:.3}) evidence {}",
                atom.atom_id,
                atom.text,
                atom.decision.label,
                atom.decision.winning_confidence,
                if cites.is_empty() { "(none)".to_string() } else { cites.join(" ") }
            );
            for p in &atom.decision.persona_verdicts {
                let _ = writeln!(
                    out,
                    "  {:<20} {:<9} confidence {:.2} trust {:.3}{}",
                    p.persona_id.as_str(),
                    p.label.as_str(),
                    p.confidence,
                    p.trust,
                    if p.error_free { "" } else { " (error)" }
                );
            }
        }
    }
    let _ = writeln!(out, "\nTRACE: {}", r.trace_id);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Passage;
    use crate::llm::{ScriptRule, ScriptedTransport};
    use crate::retrieval::EvidenceHit;
    use std::sync::Arc;

    fn ev(id: &str, rank: usize) -> Evidence {
        Evidence {
            hit: EvidenceHit {
                passage_id: id.into(),
                score_bm25_raw: 1.0,
                score_dense_raw: 0.5,
                score_bm25_norm: 1.0,
                score_dense_norm: 0.5,
                score_hybrid: 0.8,
                rank,
            },
            passage: Passage {
                passage_id: id.into(),
                doc_id: id.split('#').next().unwrap().into(),
                ordinal: 0,
                text: format!("text of {id}"),
                word_span: [0, 3],
            },
            title: format!("Title {id}"),
            url: None,
            source_tier: SourceTier::Government,
        }
    }

    fn input<'a>(citations: &'a [Citation], verdict: Verdict) -> NarrativeInput<'a> {
        NarrativeInput {
            claim: "Wages rose.",
            verdict,
            confidence: 0.7,
            citations,
            judgment_lines: vec!["[1] Title a#0: supports (confidence 0.90).".into()],
        }
    }

    fn report() -> FactCheckReport {
        let citations = build_citations(&[ev("a#0", 1), ev("b#0", 2)]);
        FactCheckReport {
            schema_version: REPORT_SCHEMA_VERSION.into(),
            claim_id: "claim-1".into(),
            claim: "Wages rose.".into(),
            mode: Mode::Baseline,
            verdict: Verdict::True,
            confidence: 0.5555555555555556,
            summary: "s".into(),
            explanation: "e [1]".into(),
            narrative_source: NarrativeSource::Template,
            citations,
            notice: None,
            verification: None,
            research: None,
            trace_id: "run-1/claim-1".into(),
        }
    }

    #[test]
    fn citations_follow_rank_and_dedup() {
        let c = build_citations(&[ev("b#0", 2), ev("a#0", 1), ev("c#1", 3)]);
        let ids: Vec<(usize, &str)> = c.iter().map(|c| (c.number, c.passage_id.as_str())).collect();
        assert_eq!(ids, vec![(1, "a#0"), (2, "b#0"), (3, "c#1")]);
        assert!(build_citations(&[]).is_empty());
        assert_eq!(build_citations(&[ev("a#0", 1), ev("a#0", 2)]).len(), 1);
    }

    #[test]
    fn model_narrative_with_valid_markers() {
        let citations = build_citations(&[ev("a#0", 1), ev("b#0", 2)]);
        let gw = Gateway::passthrough(Arc::new(ScriptedTransport::new(vec![ScriptRule::new(
            "explainer",
            &[],
            r#"{"summary": "Supported.", "explanation": "Both [1] and [2] report the rise."}"#,
        )])));
        let n = generate_narrative(&gw, &input(&citations, Verdict::True));
        assert_eq!(n.source, NarrativeSource::Model);
        assert_eq!(citation_markers(&n.explanation), vec![1, 2]);
    }

    #[test]
    fn invalid_markers_fall_back_to_template() {
        let citations = build_citations(&[ev("a#0", 1)]);
        let gw = Gateway::passthrough(Arc::new(ScriptedTransport::new(vec![ScriptRule::new(
            "explainer",
            &[],
            r#"{"summary": "Supported.", "explanation": "See [4]."}"#,
        )])));
        let n = generate_narrative(&gw, &input(&citations, Verdict::True));
        assert_eq!(n.source, NarrativeSource::Template);
        assert!(n.explanation.contains("[1] Title a#0: supports"));
    }

    #[test]
    fn uncertain_template_states_insufficiency() {
        let n = generate_narrative(&Gateway::offline(), &input(&[], Verdict::Uncertain));
        assert!(n.explanation.contains(INSUFFICIENCY_CLAUSE));
        assert!(n.explanation.contains(NO_EVIDENCE_NOTICE));
        assert!(n.summary.contains("insufficient"));
    }

    #[test]
    fn structured_round_trip_and_determinism() {
        let r = report();
        let a = render(&r, ReportFormat::Structured);
        assert_eq!(parse_structured(&a).unwrap(), r);
        assert_eq!(a, render(&r, ReportFormat::Structured));
        let t = render(&r, ReportFormat::HumanReadable);
        assert_eq!(t, render(&r, ReportFormat::HumanReadable));
        assert!(t.contains("[2] Title b#0 (government) b#0"));
    }

    #[test]
    fn long_quotes_are_cut_at_a_word() {
        let q = quote(&"word ".repeat(200));
        assert!(q.ends_with("word ..."));
        assert!(q.chars().count() <= QUOTE_CHARS + 4);
    }
}
