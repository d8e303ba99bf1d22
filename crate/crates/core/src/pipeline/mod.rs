//! Baseline and research pipelines over one article.
//!
//! Claims are processed concurrently. Each claim buffers its own trace events,
//! which are appended in claim order once every claim has finished, so a
//! replayed run logs the same sequence every time.

mod config;
mod trace;

pub use config::{GatewayConfig, PipelineConfig};
pub use trace::{
    digest, read_events, trace_path, trace_read, EventBuffer, Stage, TraceError, TraceEvent, TraceWriter,
};

use crate::corpus::{Corpus, CorpusError};
use crate::decomposition::{decompose, Decomposition};
use crate::extraction::{Claim, ClaimExtractor};
use crate::jury::{run_jury, JuryDecision};
use crate::llm::{Cassette, CassetteMode, Gateway, HttpTransport, LlmError, ScriptedTransport, Transport};
use crate::logic::aggregate_logic;
use crate::reporting::{
    append_citations, build_citations, citation_number, generate_narrative, template_narrative, AtomReport,
    Citation, FactCheckReport, NarrativeInput, ResearchExtras, NO_EVIDENCE_NOTICE, REPORT_SCHEMA_VERSION,
};
use crate::retrieval::{Bm25Params, Embedder, Evidence, HashEmbedder, HttpEmbedder, HybridIndex, RetrievalError, Retriever};
use crate::types::{Mode, Verdict};
use crate::verification::{verify, AggregateVerdict};
use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};
use std::sync::Arc;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Claim id used for the notice report of an article without claims.
pub const NO_CLAIMS_ID: &str = "no-claims";

pub const NO_CLAIMS_NOTICE: &str = "No verifiable claims were found in the input.";

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run_id: String,
    pub claims: Vec<Claim>,
    pub reports: Vec<FactCheckReport>,
    pub events: Vec<TraceEvent>,
}

pub struct Pipeline {
    config: PipelineConfig,
    retriever: Retriever,
    gateway: Arc<Gateway>,
}

fn build_transport(g: &GatewayConfig) -> Result<Option<Arc<dyn Transport>>, PipelineError> {
    if let Some(script) = &g.script {
        let t = ScriptedTransport::load(script)
            .map_err(|e| PipelineError::Config(format!("script {}: {e}", script.display())))?;
        return Ok(Some(Arc::new(t)));
    }
    Ok(g.endpoint.as_ref().map(|endpoint| {
        let t = HttpTransport::new(endpoint, g.api_key.clone(), &g.model, Duration::from_secs(g.timeout_secs));
        Arc::new(t) as Arc<dyn Transport>
    }))
}

/// Gateway described by `g`. A replay cassette never touches the transport;
/// without a cassette, replay mode degrades to live calls when an endpoint or
/// script is configured and to the offline gateway otherwise.
pub fn build_gateway(g: &GatewayConfig) -> Result<Gateway, PipelineError> {
    let transport = build_transport(g)?;
    let gateway = match (g.cassette_mode, &g.cassette, transport) {
        (CassetteMode::Replay, Some(path), _) => Gateway::replay(Arc::new(Cassette::load(path)?), None),
        (CassetteMode::Record, Some(path), Some(t)) => {
            let cassette = if path.exists() { Cassette::load(path)? } else { Cassette::new() };
            Gateway::record(t, Arc::new(cassette))
        }
        (CassetteMode::Record, _, None) => {
            return Err(PipelineError::Config("record mode needs an endpoint or a script".into()))
        }
        (_, _, Some(t)) => Gateway::passthrough(t),
        (_, _, None) => Gateway::offline(),
    };
    Ok(gateway.with_parallelism(g.parallelism))
}

fn build_embedder(g: &GatewayConfig) -> Result<Arc<dyn Embedder>, PipelineError> {
    match &g.embedding_model {
        None => Ok(Arc::new(HashEmbedder::default())),
        Some(model) => {
            let endpoint = g
                .endpoint
                .as_deref()
                .ok_or_else(|| PipelineError::Config("embedding_model needs an endpoint".into()))?;
            Ok(Arc::new(HttpEmbedder::new(endpoint, g.api_key.clone(), model, g.embedding_dim)))
        }
    }
}

/// Index from `config.index`, or one built in memory from `config.corpus`.
pub fn build_retriever(config: &PipelineConfig) -> Result<Retriever, PipelineError> {
    let embedder = build_embedder(&config.gateway)?;
    let index = match (&config.index, &config.corpus) {
        (Some(dir), _) => HybridIndex::load(dir)?,
        (None, Some(path)) => {
            HybridIndex::build(&Corpus::load(path)?, embedder.as_ref(), Bm25Params::default())?
        }
        (None, None) => return Err(PipelineError::Config("set either `index` or `corpus`".into())),
    };
    Ok(Retriever::new(index, embedder)?)
}

fn retrieve_logged(
    retriever: &Retriever,
    config: &PipelineConfig,
    query: &str,
    atom_id: Option<&str>,
    buf: &mut EventBuffer,
) -> Vec<Evidence> {
    match retriever.retrieve(query, &config.retrieval) {
        Ok(evidence) => {
            let hits: Vec<_> = evidence.iter().map(|e| &e.hit).collect();
            buf.push(Stage::Retrieve, query, json!({"atom_id": atom_id, "hits": hits}));
            evidence
        }
        Err(e) => {
            log::warn!("retrieval failed for `{query}`: {e}");
            buf.push(Stage::Retrieve, query, json!({"atom_id": atom_id, "hits": [], "error": e.to_string()}));
            Vec::new()
        }
    }
}

fn judgment_lines(verdict: &AggregateVerdict, citations: &[Citation]) -> Vec<String> {
    verdict
        .judgments
        .iter()
        .map(|j| {
            let cite = citation_number(citations, &j.passage_id).map(|k| format!("[{k}] ")).unwrap_or_default();
            let mut line = format!("{cite}{} (confidence {:.2})", j.label.as_str(), j.confidence);
            if let Some(err) = &j.error {
                line.push_str(&format!(": judgment failed ({err})"));
            } else if !j.reasoning_points.is_empty() {
                line.push_str(": ");
                line.push_str(&j.reasoning_points.join("; "));
            }
            line
        })
        .collect()
}

fn atom_lines(atoms: &[AtomReport], formula: &str, value: Verdict) -> Vec<String> {
    let mut lines: Vec<String> = atoms
        .iter()
        .map(|a| {
            let cites: String = a.citation_numbers.iter().map(|k| format!("[{k}]")).collect();
            let cites = if cites.is_empty() { String::new() } else { format!(" {cites}") };
            format!(
                "{} \"{}\": {} (vote share {:.2}){cites}",
                a.atom_id,
                a.text,
                a.decision.label,
                a.decision.winning_confidence
            )
        })
        .collect();
    lines.push(format!("Formula {formula} evaluates to {value}."));
    lines
}

/// Intermediate result of checking one claim, before narrative and report
/// assembly.
struct Assessment {
    verdict: Verdict,
    confidence: f64,
    citations: Vec<Citation>,
    lines: Vec<String>,
    verification: Option<AggregateVerdict>,
    research: Option<ResearchExtras>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, retriever: Retriever, gateway: Gateway) -> Self {
        Self { config, retriever, gateway: Arc::new(gateway) }
    }

    /// Validates `config` and builds retrieval and gateway from it. Nothing
    /// here calls a model.
    pub fn from_config(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let retriever = build_retriever(&config)?;
        let gateway = build_gateway(&config.gateway)?;
        Ok(Self::new(config, retriever, gateway))
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn retriever(&self) -> &Retriever {
        &self.retriever
    }

    /// Writes the cassette back when recording.
    pub fn save_cassette(&self) -> Result<(), PipelineError> {
        if let (CassetteMode::Record, Some(path), Some(cassette)) =
            (self.gateway.mode(), &self.config.gateway.cassette, self.gateway.cassette())
        {
            cassette.save(path)?;
        }
        Ok(())
    }

    /// Derived from the input, the mode and every setting that changes
    /// results, so identical runs share a run id.
    pub fn run_id(&self, input: &str, mode: Mode) -> String {
        let c = &self.config;
        let settings = json!([
            mode,
            c.retrieval,
            c.thresholds,
            c.personas,
            c.extraction,
            c.adaptive_threshold,
            self.retriever.index().embedder_id(),
            self.retriever.index().passages().len(),
        ]);
        let mut h = Sha256::new();
        h.update(settings.to_string().as_bytes());
        h.update([0]);
        h.update(input.as_bytes());
        format!("run-{}", hex::encode(&h.finalize()[..8]))
    }

    pub fn run(&self, input: &str) -> Result<RunOutput, PipelineError> {
        self.run_mode(input, self.config.mode)
    }

    pub fn run_baseline(&self, input: &str) -> Result<RunOutput, PipelineError> {
        self.run_mode(input, Mode::Baseline)
    }

    pub fn run_research(&self, input: &str) -> Result<RunOutput, PipelineError> {
        self.run_mode(input, Mode::Research)
    }

    /// Extracts claims and checks each one. Per-claim failures degrade inside
    /// the stages; only trace I/O can fail the run.
    pub fn run_mode(&self, input: &str, mode: Mode) -> Result<RunOutput, PipelineError> {
        let run_id = self.run_id(input, mode);
        let writer = match &self.config.trace_dir {
            Some(dir) => TraceWriter::to_dir(dir, &run_id)?,
            None => TraceWriter::in_memory(&run_id),
        };

        let (claims, extraction) = ClaimExtractor::new(Some(&self.gateway), self.config.extraction).extract(input);
        let mut buf = EventBuffer::default();
        buf.push(Stage::Extract, input, json!({"claims": claims, "trace": extraction}));
        writer.append(buf)?;

        let reports = if claims.is_empty() {
            vec![self.notice_report(&run_id, mode)]
        } else {
            let results: Vec<(FactCheckReport, EventBuffer)> = claims
                .par_iter()
                .map(|claim| {
                    let mut buf = EventBuffer::for_claim(&claim.claim_id);
                    let report = self.check(&claim.claim_id, &claim.text, mode, true, &run_id, &mut buf);
                    (report, buf)
                })
                .collect();
            let mut reports = Vec::with_capacity(results.len());
            for (report, buf) in results {
                writer.append(buf)?;
                reports.push(report);
            }
            reports
        };
        Ok(RunOutput { run_id, claims, reports, events: writer.events() })
    }

    /// Checks `text` as a single claim without extraction and with the
    /// template narrative. Used for benchmark statements.
    pub fn check_statement(&self, claim_id: &str, text: &str, mode: Mode) -> FactCheckReport {
        let mut buf = EventBuffer::for_claim(claim_id);
        self.check(claim_id, text, mode, false, "", &mut buf)
    }

    fn notice_report(&self, run_id: &str, mode: Mode) -> FactCheckReport {
        let input = NarrativeInput {
            claim: "",
            verdict: Verdict::Uncertain,
            confidence: 0.0,
            citations: &[],
            judgment_lines: Vec::new(),
        };
        let narrative = template_narrative(&input);
        FactCheckReport {
            schema_version: REPORT_SCHEMA_VERSION.into(),
            claim_id: NO_CLAIMS_ID.into(),
            claim: String::new(),
            mode,
            verdict: Verdict::Uncertain,
            confidence: 0.0,
            summary: NO_CLAIMS_NOTICE.into(),
            explanation: narrative.explanation,
            narrative_source: narrative.source,
            citations: Vec::new(),
            notice: Some(NO_CLAIMS_NOTICE.into()),
            verification: None,
            research: None,
            trace_id: run_id.into(),
        }
    }

    fn check(
        &self,
        claim_id: &str,
        text: &str,
        mode: Mode,
        narrate: bool,
        run_id: &str,
        buf: &mut EventBuffer,
    ) -> FactCheckReport {
        let assessment = match mode {
            Mode::Baseline => self.assess_baseline(text, buf),
            Mode::Research => self.assess_research(text, buf),
        };
        let input = NarrativeInput {
            claim: text,
            verdict: assessment.verdict,
            confidence: assessment.confidence,
            citations: &assessment.citations,
            judgment_lines: assessment.lines.clone(),
        };
        let narrative = if narrate { generate_narrative(&self.gateway, &input) } else { template_narrative(&input) };
        buf.push(
            Stage::Explain,
            text,
            json!({"source": narrative.source, "summary": narrative.summary, "explanation": narrative.explanation}),
        );
        FactCheckReport {
            schema_version: REPORT_SCHEMA_VERSION.into(),
            claim_id: claim_id.into(),
            claim: text.into(),
            mode,
            verdict: assessment.verdict,
            confidence: assessment.confidence,
            summary: narrative.summary,
            explanation: narrative.explanation,
            narrative_source: narrative.source,
            notice: assessment.citations.is_empty().then(|| NO_EVIDENCE_NOTICE.to_string()),
            citations: assessment.citations,
            verification: assessment.verification,
            research: assessment.research,
            trace_id: run_id.into(),
        }
    }

    fn assess_baseline(&self, text: &str, buf: &mut EventBuffer) -> Assessment {
        let evidence = retrieve_logged(&self.retriever, &self.config, text, None, buf);
        let verdict = verify(&self.gateway, text, &evidence, &self.config.thresholds);
        for j in &verdict.judgments {
            buf.push(Stage::Judge, &format!("{text}\n{}", j.passage_id), json!(j));
        }
        buf.push(
            Stage::Aggregate,
            text,
            json!({
                "label": verdict.label,
                "confidence": verdict.confidence,
                "support_mass": verdict.support_mass,
                "contradiction_mass": verdict.contradiction_mass,
            }),
        );
        let citations = build_citations(&evidence);
        Assessment {
            verdict: verdict.label,
            confidence: verdict.confidence,
            lines: judgment_lines(&verdict, &citations),
            citations,
            verification: Some(verdict),
            research: None,
        }
    }

    fn routes_to_baseline(&self, d: &Decomposition) -> bool {
        // A cutoff of 1.0 sends everything to the baseline even though
        // complexity itself may reach 1.0.
        match self.config.adaptive_threshold {
            Some(t) => d.complexity < t || t >= 1.0,
            None => false,
        }
    }

    fn assess_research(&self, text: &str, buf: &mut EventBuffer) -> Assessment {
        let decomposition = decompose(&self.gateway, text);
        buf.push(Stage::Decompose, text, json!(decomposition));

        if self.routes_to_baseline(&decomposition) {
            let mut a = self.assess_baseline(text, buf);
            a.research = Some(ResearchExtras {
                decomposition,
                atoms: Vec::new(),
                formula_value: None,
                logic_fallback_used: false,
                logic_fallback_reason: None,
                routed_to_baseline: true,
            });
            return a;
        }

        let mut citations: Vec<Citation> = Vec::new();
        let mut judged: Vec<(String, String, Vec<Evidence>, JuryDecision)> = Vec::new();
        for atom in &decomposition.atomic_claims {
            let evidence = retrieve_logged(&self.retriever, &self.config, &atom.text, Some(&atom.atom_id), buf);
            let decision = run_jury(&self.gateway, &self.config.personas, &atom.text, &evidence);
            for pv in &decision.persona_verdicts {
                buf.push(Stage::Persona, &atom.text, json!({"atom_id": atom.atom_id, "verdict": pv}));
            }
            buf.push(
                Stage::Vote,
                &atom.text,
                json!({
                    "atom_id": atom.atom_id,
                    "label": decision.label,
                    "vote_scores": decision.vote_scores,
                    "winning_confidence": decision.winning_confidence,
                }),
            );
            let mut ranked: Vec<&Evidence> = evidence.iter().collect();
            ranked.sort_by_key(|e| e.hit.rank);
            citations = append_citations(citations, ranked);
            judged.push((atom.atom_id.clone(), atom.text.clone(), evidence, decision));
        }

        let labels: Vec<(String, Verdict)> = judged.iter().map(|(id, _, _, d)| (id.clone(), d.label)).collect();
        let outcome = aggregate_logic(&decomposition.formula, &labels);
        buf.push(Stage::Logic, &decomposition.formula, json!(outcome));

        let atoms: Vec<AtomReport> = judged
            .into_iter()
            .map(|(atom_id, text, evidence, decision)| AtomReport {
                citation_numbers: evidence
                    .iter()
                    .filter_map(|e| citation_number(&citations, &e.passage.passage_id))
                    .collect(),
                atom_id,
                text,
                decision,
            })
            .collect();
        let confidence = if atoms.is_empty() {
            0.0
        } else {
            atoms.iter().map(|a| a.decision.winning_confidence).sum::<f64>() / atoms.len() as f64
        };
        Assessment {
            verdict: outcome.label,
            confidence,
            lines: atom_lines(&atoms, &decomposition.formula, outcome.label),
            citations,
            verification: None,
            research: Some(ResearchExtras {
                decomposition,
                atoms,
                formula_value: outcome.formula_value,
                logic_fallback_used: outcome.used_fallback,
                logic_fallback_reason: outcome.fallback_reason,
                routed_to_baseline: false,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ChunkConfig, SourceDocument, SourceTier};
    use crate::llm::{RetryPolicy, ScriptRule};

    fn corpus() -> Corpus {
        let doc = |id: &str, title: &str, body: &str| SourceDocument {
            doc_id: id.into(),
            title: title.into(),
            url: None,
            source_tier: SourceTier::Government,
            body: body.into(),
        };
        Corpus::build(
            vec![
                doc("bls", "Jobs report", "The unemployment rate fell to 3.9 percent in 2024 according to the Labor Department."),
                doc("ohio", "Ohio grants", "Ohio officials confirmed two million dollars in new grants for rural clinics."),
            ],
            ChunkConfig::default(),
        )
        .unwrap()
    }

    fn pipeline(rules: Vec<ScriptRule>, config: PipelineConfig) -> Pipeline {
        let gw = Gateway::passthrough(Arc::new(ScriptedTransport::new(rules))).with_retry(RetryPolicy::no_delay());
        Pipeline::new(config, Retriever::offline(&corpus()).unwrap(), gw)
    }

    const ARTICLE: &str = "The Labor Department reported that unemployment fell to 3.9% in 2024. \
        Officials in Ohio confirmed $2 million in new grants.";

    #[test]
    fn baseline_offline_degrades_to_uncertain() {
        let p = pipeline(vec![], PipelineConfig::default());
        let out = p.run_baseline(ARTICLE).unwrap();
        assert_eq!(out.reports.len(), 2);
        for r in &out.reports {
            assert_eq!(r.verdict, Verdict::Uncertain);
            assert!(!r.citations.is_empty());
            assert_eq!(r.trace_id, out.run_id);
        }
        let stages: Vec<Stage> = out.events.iter().map(|e| e.stage).collect();
        assert_eq!(stages[0], Stage::Extract);
        assert_eq!(*stages.last().unwrap(), Stage::Explain);
        assert!(out.events.windows(2).all(|w| w[0].seq + 1 == w[1].seq));
    }

    #[test]
    fn empty_input_gives_notice_report() {
        let p = pipeline(vec![], PipelineConfig::default());
        let out = p.run_baseline("Lovely weather.").unwrap();
        assert_eq!(out.reports.len(), 1);
        assert_eq!(out.reports[0].claim_id, NO_CLAIMS_ID);
        assert_eq!(out.reports[0].notice.as_deref(), Some(NO_CLAIMS_NOTICE));
    }

    #[test]
    fn run_id_is_stable_and_mode_sensitive() {
        let p = pipeline(vec![], PipelineConfig::default());
        assert_eq!(p.run_id("a", Mode::Baseline), p.run_id("a", Mode::Baseline));
        assert_ne!(p.run_id("a", Mode::Baseline), p.run_id("a", Mode::Research));
        assert_ne!(p.run_id("a", Mode::Baseline), p.run_id("b", Mode::Baseline));
    }

    #[test]
    fn research_fallback_uses_whole_claim_jury() {
        let rules = vec![ScriptRule::new(
            "persona:*",
            &[],
            r#"{"label": "true", "confidence": 0.8, "explanation": "matches [1]"}"#,
        )];
        let p = pipeline(rules, PipelineConfig::default());
        let report = p.check_statement("s1", "Unemployment fell to 3.9 percent in 2024.", Mode::Research);
        let extras = report.research.unwrap();
        assert!(extras.decomposition.fallback_used);
        assert_eq!(extras.atoms.len(), 1);
        assert_eq!(report.verdict, extras.atoms[0].decision.label);
        assert_eq!(report.verdict, Verdict::True);
    }

    #[test]
    fn adaptive_cutoff_of_one_routes_to_baseline() {
        let config = PipelineConfig { adaptive_threshold: Some(1.0), ..Default::default() };
        let p = pipeline(vec![], config);
        let report = p.check_statement("s1", "Unemployment fell in 2024.", Mode::Research);
        assert!(report.research.as_ref().unwrap().routed_to_baseline);
        assert!(report.verification.is_some());
    }
}
