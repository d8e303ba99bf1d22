//! Hybrid sparse + dense evidence retrieval.
//!
//! Each passage is indexed twice: a BM25 inverted index and a dense vector
//! table. A query takes the union of the top-k candidates from both, min-max
//! normalizes each raw score over that pool, combines them linearly
//! (0.6 sparse / 0.4 dense by default) and picks the final bundle with
//! Maximal Marginal Relevance.

mod bm25;
mod dense;
mod store;
mod tokenize;

pub use bm25::{Bm25Params, SparseIndex, DEFAULT_B, DEFAULT_K1};
pub use dense::{
    dense_score, dot, l2_normalize, DenseIndex, Embedder, HashEmbedder, HttpEmbedder,
    HASH_EMBEDDER_DIM, HASH_EMBEDDER_ID,
};
pub use store::INDEX_FORMAT;
pub use tokenize::tokenize;

use crate::corpus::{Corpus, Passage, SourceDocument, SourceTier};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("unknown passage id `{0}`")]
    UnknownPassage(String),
    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedder `{got}` does not match index embedder `{expected}`")]
    EmbedderMismatch { expected: String, got: String },
    #[error("embedding failed: {0}")]
    Embedding(String),
    #[error("invalid index: {0}")]
    InvalidIndex(String),
    #[error("hybrid weights must be non-negative and sum to 1 (got {0} + {1})")]
    InvalidWeights(f64, f64),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchParams {
    /// Candidates taken from each index before fusion.
    pub k: usize,
    /// Passages returned.
    pub m: usize,
    /// MMR relevance weight; 1.0 disables the diversity penalty.
    pub lambda: f64,
    pub bm25_weight: f64,
    pub dense_weight: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self { k: 50, m: 5, lambda: 0.7, bm25_weight: 0.6, dense_weight: 0.4 }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        let (b, d) = (self.bm25_weight, self.dense_weight);
        if b < 0.0 || d < 0.0 || ((b + d) - 1.0).abs() > 1e-9 {
            return Err(RetrievalError::InvalidWeights(b, d));
        }
        Ok(())
    }
}

/// One retrieved passage with its raw and normalized scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceHit {
    pub passage_id: String,
    pub score_bm25_raw: f64,
    pub score_dense_raw: f64,
    pub score_bm25_norm: f64,
    pub score_dense_norm: f64,
    pub score_hybrid: f64,
    pub rank: usize,
}

/// Linear fusion of normalized scores.
pub fn hybrid_score(bm25_norm: f64, dense_norm: f64, bm25_weight: f64, dense_weight: f64) -> f64 {
    bm25_weight * bm25_norm + dense_weight * dense_norm
}

/// A hit joined with its passage and the metadata of its source document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub hit: EvidenceHit,
    pub passage: Passage,
    pub title: String,
    pub url: Option<String>,
    pub source_tier: SourceTier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub hits: Vec<EvidenceHit>,
    /// Set when the index holds no passages.
    pub empty_index: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub passages: usize,
    pub avg_doc_length: f64,
    pub vocab_size: usize,
}

/// A fused candidate together with its dense vector, as consumed by MMR.
#[derive(Debug, Clone, PartialEq)]
pub struct MmrCandidate {
    pub hit: EvidenceHit,
    pub vector: Vec<f64>,
}

/// Greedy Maximal Marginal Relevance.
///
/// The first pick is the highest hybrid score; each subsequent pick maximizes
/// `lambda * hybrid - (1 - lambda) * max_cos(selected)`. Ties go to the
/// smaller passage id. Returns candidates in selection order.
pub fn mmr_select(candidates: Vec<MmrCandidate>, m: usize, lambda: f64) -> Vec<MmrCandidate> {
    let mut remaining = candidates;
    let mut selected: Vec<MmrCandidate> = Vec::with_capacity(m.min(remaining.len()));
    while selected.len() < m && !remaining.is_empty() {
        let objective = |c: &MmrCandidate| -> f64 {
            if selected.is_empty() {
                return c.hit.score_hybrid;
            }
            let max_sim = selected
                .iter()
                .map(|s| dot(&c.vector, &s.vector))
                .fold(f64::NEG_INFINITY, f64::max);
            lambda * c.hit.score_hybrid - (1.0 - lambda) * max_sim
        };
        let mut best = 0;
        let mut best_score = objective(&remaining[0]);
        for (i, cand) in remaining.iter().enumerate().skip(1) {
            let score = objective(cand);
            let better = match score.partial_cmp(&best_score) {
                Some(Ordering::Greater) => true,
                Some(Ordering::Equal) => cand.hit.passage_id < remaining[best].hit.passage_id,
                _ => false,
            };
            if better {
                best = i;
                best_score = score;
            }
        }
        selected.push(remaining.swap_remove(best));
    }
    selected
}

/// Orders hits by descending hybrid score, ties by passage id.
pub fn rank_order(a: &EvidenceHit, b: &EvidenceHit) -> Ordering {
    b.score_hybrid
        .partial_cmp(&a.score_hybrid)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.passage_id.cmp(&b.passage_id))
}

/// Sparse and dense indices over one passage set. Passages are held sorted by
/// passage id; internal postings refer to positions in that list.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridIndex {
    documents: Vec<SourceDocument>,
    passages: Vec<Passage>,
    sparse: SparseIndex,
    dense: DenseIndex,
}

impl HybridIndex {
    pub fn build(
        corpus: &Corpus,
        embedder: &dyn Embedder,
        params: Bm25Params,
    ) -> Result<Self, RetrievalError> {
        let mut passages = corpus.passages.clone();
        passages.sort_by(|a, b| a.passage_id.cmp(&b.passage_id));
        if passages.windows(2).any(|w| w[0].passage_id == w[1].passage_id) {
            return Err(RetrievalError::InvalidIndex("duplicate passage ids".into()));
        }
        let sparse = SparseIndex::build(passages.iter().map(|p| p.text.as_str()), params);
        let dense = DenseIndex::build(passages.iter().map(|p| p.text.as_str()), embedder)?;
        Ok(Self { documents: corpus.documents.clone(), passages, sparse, dense })
    }

    pub(crate) fn from_parts(
        documents: Vec<SourceDocument>,
        passages: Vec<Passage>,
        sparse: SparseIndex,
        dense: DenseIndex,
    ) -> Self {
        Self { documents, passages, sparse, dense }
    }

    pub fn sparse(&self) -> &SparseIndex {
        &self.sparse
    }

    pub fn dense(&self) -> &DenseIndex {
        &self.dense
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn documents(&self) -> &[SourceDocument] {
        &self.documents
    }

    pub fn embedder_id(&self) -> &str {
        &self.dense.embedder_id
    }

    fn position(&self, passage_id: &str) -> Option<usize> {
        self.passages
            .binary_search_by(|p| p.passage_id.as_str().cmp(passage_id))
            .ok()
    }

    pub fn lookup_passage(&self, passage_id: &str) -> Result<&Passage, RetrievalError> {
        self.position(passage_id)
            .map(|i| &self.passages[i])
            .ok_or_else(|| RetrievalError::UnknownPassage(passage_id.to_string()))
    }

    pub fn document_for(&self, passage_id: &str) -> Option<&SourceDocument> {
        let passage = self.lookup_passage(passage_id).ok()?;
        self.documents.iter().find(|d| d.doc_id == passage.doc_id)
    }

    /// Joins hits with their passages and source metadata, keeping order.
    pub fn resolve(&self, hits: Vec<EvidenceHit>) -> Result<Vec<Evidence>, RetrievalError> {
        hits.into_iter()
            .map(|hit| {
                let passage = self.lookup_passage(&hit.passage_id)?.clone();
                let doc = self.document_for(&hit.passage_id);
                Ok(Evidence {
                    title: doc.map(|d| d.title.clone()).unwrap_or_default(),
                    url: doc.and_then(|d| d.url.clone()),
                    source_tier: doc.map(|d| d.source_tier).unwrap_or_default(),
                    passage,
                    hit,
                })
            })
            .collect()
    }

    pub fn passage_vector(&self, passage_id: &str) -> Result<&[f64], RetrievalError> {
        self.position(passage_id)
            .map(|i| self.dense.vectors[i].as_slice())
            .ok_or_else(|| RetrievalError::UnknownPassage(passage_id.to_string()))
    }

    pub fn bm25_score(&self, query_terms: &[String], passage_id: &str) -> Result<f64, RetrievalError> {
        let i = self
            .position(passage_id)
            .ok_or_else(|| RetrievalError::UnknownPassage(passage_id.to_string()))?;
        Ok(self.sparse.score(query_terms, i))
    }

    pub fn dense_score(&self, query_vector: &[f64], passage_id: &str) -> Result<f64, RetrievalError> {
        let i = self
            .position(passage_id)
            .ok_or_else(|| RetrievalError::UnknownPassage(passage_id.to_string()))?;
        self.dense.score(query_vector, i)
    }

    pub fn corpus_stats(&self) -> CorpusStats {
        CorpusStats {
            passages: self.passages.len(),
            avg_doc_length: self.sparse.avg_doc_length,
            vocab_size: self.sparse.vocab_size(),
        }
    }

    /// Hybrid search with an explicit embedder (which must be the one the
    /// index was built with).
    pub fn search(
        &self,
        embedder: &dyn Embedder,
        claim: &str,
        params: &SearchParams,
    ) -> Result<SearchResult, RetrievalError> {
        params.validate()?;
        if embedder.id() != self.dense.embedder_id {
            return Err(RetrievalError::EmbedderMismatch {
                expected: self.dense.embedder_id.clone(),
                got: embedder.id().to_string(),
            });
        }
        if self.passages.is_empty() {
            return Ok(SearchResult { hits: Vec::new(), empty_index: true });
        }
        let terms = tokenize(claim);
        let query_vec = embedder.embed(claim)?;
        let bm25_raw = self.sparse.score_all(&terms);
        let dense_raw = self
            .dense
            .vectors
            .iter()
            .map(|v| dense_score(&query_vec, v))
            .collect::<Result<Vec<_>, _>>()?;

        let bm25_top = top_k(&bm25_raw, params.k);
        let dense_top = top_k(&dense_raw, params.k);
        let pool: BTreeSet<usize> = bm25_top.iter().chain(&dense_top).copied().collect();

        // a candidate absent from one index's top-k is floored at that
        // index's pool minimum
        let bm25_norm = MinMax::over(bm25_top.iter().map(|&i| bm25_raw[i]));
        let dense_norm = MinMax::over(dense_top.iter().map(|&i| dense_raw[i]));

        let candidates: Vec<MmrCandidate> = pool
            .into_iter()
            .map(|i| {
                let nb = bm25_norm.normalize(bm25_raw[i]);
                let nd = dense_norm.normalize(dense_raw[i]);
                MmrCandidate {
                    hit: EvidenceHit {
                        passage_id: self.passages[i].passage_id.clone(),
                        score_bm25_raw: bm25_raw[i],
                        score_dense_raw: dense_raw[i],
                        score_bm25_norm: nb,
                        score_dense_norm: nd,
                        score_hybrid: hybrid_score(nb, nd, params.bm25_weight, params.dense_weight),
                        rank: 0,
                    },
                    vector: self.dense.vectors[i].clone(),
                }
            })
            .collect();

        let mut hits: Vec<EvidenceHit> = mmr_select(candidates, params.m, params.lambda)
            .into_iter()
            .map(|c| c.hit)
            .collect();
        hits.sort_by(rank_order);
        for (i, hit) in hits.iter_mut().enumerate() {
            hit.rank = i + 1;
        }
        Ok(SearchResult { hits, empty_index: false })
    }
}

/// Indices of the `k` largest scores, ties broken by position.
fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

struct MinMax {
    min: f64,
    max: f64,
}

impl MinMax {
    fn over(values: impl Iterator<Item = f64>) -> Self {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        Self { min, max }
    }

    fn normalize(&self, raw: f64) -> f64 {
        let span = self.max - self.min;
        if span.is_nan() || span <= 0.0 {
            return 0.0;
        }
        ((raw.max(self.min) - self.min) / span).clamp(0.0, 1.0)
    }
}

/// Index plus the embedder that queries it.
#[derive(Clone)]
pub struct Retriever {
    index: Arc<HybridIndex>,
    embedder: Arc<dyn Embedder>,
}

impl Retriever {
    pub fn new(index: HybridIndex, embedder: Arc<dyn Embedder>) -> Result<Self, RetrievalError> {
        if index.embedder_id() != embedder.id() {
            return Err(RetrievalError::EmbedderMismatch {
                expected: index.embedder_id().to_string(),
                got: embedder.id().to_string(),
            });
        }
        Ok(Self { index: Arc::new(index), embedder })
    }

    /// Builds an index over `corpus` with the offline hashed embedder.
    pub fn offline(corpus: &Corpus) -> Result<Self, RetrievalError> {
        let embedder: Arc<dyn Embedder> = Arc::new(HashEmbedder::default());
        let index = HybridIndex::build(corpus, embedder.as_ref(), Bm25Params::default())?;
        Self::new(index, embedder)
    }

    pub fn index(&self) -> &HybridIndex {
        &self.index
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    pub fn search(&self, claim: &str, params: &SearchParams) -> Result<SearchResult, RetrievalError> {
        self.index.search(self.embedder.as_ref(), claim, params)
    }

    /// Search, then resolve hits into evidence.
    pub fn retrieve(&self, claim: &str, params: &SearchParams) -> Result<Vec<Evidence>, RetrievalError> {
        let result = self.search(claim, params)?;
        self.index.resolve(result.hits)
    }

    pub fn lookup_passage(&self, passage_id: &str) -> Result<&Passage, RetrievalError> {
        self.index.lookup_passage(passage_id)
    }

    pub fn corpus_stats(&self) -> CorpusStats {
        self.index.corpus_stats()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ChunkConfig;

    fn doc(id: &str, body: &str) -> SourceDocument {
        SourceDocument {
            doc_id: id.into(),
            title: format!("title {id}"),
            url: None,
            source_tier: SourceTier::Other,
            body: body.into(),
        }
    }

    fn small_corpus() -> Corpus {
        Corpus::build(
            vec![
                doc("a", "the central bank raised interest rates in march"),
                doc("b", "interest rates were cut by the central bank"),
                doc("c", "the football team won the national championship"),
            ],
            ChunkConfig::default(),
        )
        .unwrap()
    }

    fn hit(id: &str, hybrid: f64) -> EvidenceHit {
        EvidenceHit {
            passage_id: id.into(),
            score_bm25_raw: 0.0,
            score_dense_raw: 0.0,
            score_bm25_norm: 0.0,
            score_dense_norm: 0.0,
            score_hybrid: hybrid,
            rank: 0,
        }
    }

    #[test]
    fn hybrid_endpoint_arithmetic() {
        let h = |b, d| hybrid_score(b, d, 0.6, 0.4);
        assert!((h(1.0, 0.0) - 0.6).abs() < 1e-12);
        assert!((h(0.0, 1.0) - 0.4).abs() < 1e-12);
        assert!((h(0.5, 0.5) - 0.5).abs() < 1e-12);
        assert!((h(0.2, 0.9) - 0.48).abs() < 1e-12);
    }

    #[test]
    fn lookup_and_stats() {
        let r = Retriever::offline(&small_corpus()).unwrap();
        assert!(r.lookup_passage("a#0").unwrap().text.contains("raised"));
        assert!(matches!(
            r.lookup_passage("zz#9"),
            Err(RetrievalError::UnknownPassage(_))
        ));
        let stats = r.corpus_stats();
        assert_eq!(stats.passages, 3);
    }

    #[test]
    fn stats_average_length() {
        let words = |n: usize| vec!["x"; n].join(" ");
        let corpus = Corpus::build(
            vec![doc("a", &words(10)), doc("b", &words(20)), doc("c", &words(30))],
            ChunkConfig::default(),
        )
        .unwrap();
        let r = Retriever::offline(&corpus).unwrap();
        assert_eq!(r.corpus_stats().avg_doc_length, 20.0);
        assert_eq!(r.corpus_stats().vocab_size, 1);
    }

    #[test]
    fn search_scores_are_consistent() {
        let r = Retriever::offline(&small_corpus()).unwrap();
        let res = r.search("did the central bank raise interest rates", &SearchParams::default()).unwrap();
        assert!(!res.empty_index);
        assert_eq!(res.hits.len(), 3);
        assert_eq!(res.hits[0].passage_id, "a#0");
        for (i, h) in res.hits.iter().enumerate() {
            assert_eq!(h.rank, i + 1);
            assert!((h.score_hybrid - (0.6 * h.score_bm25_norm + 0.4 * h.score_dense_norm)).abs() < 1e-12);
        }
        let norms: Vec<f64> = res.hits.iter().map(|h| h.score_bm25_norm).collect();
        assert!(norms.contains(&1.0) && norms.contains(&0.0));
    }

    #[test]
    fn retrieve_attaches_source_metadata() {
        let r = Retriever::offline(&small_corpus()).unwrap();
        let ev = r.retrieve("football championship", &SearchParams::default()).unwrap();
        assert_eq!(ev[0].passage.passage_id, "c#0");
        assert_eq!(ev[0].title, "title c");
        assert_eq!(ev[0].hit.rank, 1);
    }

    #[test]
    fn empty_index_is_flagged() {
        let r = Retriever::offline(&Corpus::default()).unwrap();
        let res = r.search("anything", &SearchParams::default()).unwrap();
        assert!(res.empty_index && res.hits.is_empty());
    }

    #[test]
    fn bad_weights_rejected() {
        let r = Retriever::offline(&small_corpus()).unwrap();
        let params = SearchParams { bm25_weight: 0.7, dense_weight: 0.7, ..Default::default() };
        assert!(matches!(r.search("x", &params), Err(RetrievalError::InvalidWeights(..))));
    }

    #[test]
    fn mmr_lambda_one_is_relevance_order() {
        let cands = vec![
            MmrCandidate { hit: hit("a", 0.2), vector: vec![1.0, 0.0] },
            MmrCandidate { hit: hit("b", 0.9), vector: vec![1.0, 0.0] },
            MmrCandidate { hit: hit("c", 0.5), vector: vec![0.0, 1.0] },
        ];
        let ids: Vec<_> = mmr_select(cands, 3, 1.0).into_iter().map(|c| c.hit.passage_id).collect();
        assert_eq!(ids, ["b", "c", "a"]);
    }

    #[test]
    fn mmr_m_one_and_oversized_m() {
        let cands = vec![
            MmrCandidate { hit: hit("a", 0.2), vector: vec![1.0] },
            MmrCandidate { hit: hit("b", 0.9), vector: vec![1.0] },
        ];
        let one = mmr_select(cands.clone(), 1, 0.5);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].hit.passage_id, "b");
        assert_eq!(mmr_select(cands, 10, 0.5).len(), 2);
    }

    #[test]
    fn mmr_tie_breaks_by_passage_id() {
        let cands = vec![
            MmrCandidate { hit: hit("z", 0.5), vector: vec![1.0] },
            MmrCandidate { hit: hit("m", 0.5), vector: vec![1.0] },
        ];
        assert_eq!(mmr_select(cands, 1, 0.7)[0].hit.passage_id, "m");
    }
}
