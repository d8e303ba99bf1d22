//! Okapi BM25 over an in-memory inverted index.

use super::tokenize::tokenize;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Lucene defaults.
pub const DEFAULT_K1: f64 = 0.9;
pub const DEFAULT_B: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: DEFAULT_K1, b: DEFAULT_B }
    }
}

/// Postings reference passages by their position in the index's passage
/// list, which is sorted by passage id, so postings are sorted by id too.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseIndex {
    pub postings: BTreeMap<String, Vec<(u32, u32)>>,
    pub doc_lengths: Vec<u32>,
    pub avg_doc_length: f64,
    pub params: Bm25Params,
}

impl SparseIndex {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, params: Bm25Params) -> Self {
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_lengths = Vec::new();
        for (idx, text) in texts.into_iter().enumerate() {
            let tokens = tokenize(text);
            doc_lengths.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((idx as u32, count));
            }
        }
        let avg_doc_length = if doc_lengths.is_empty() {
            0.0
        } else {
            doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_lengths.len() as f64
        };
        Self { postings, doc_lengths, avg_doc_length, params }
    }

    pub fn len(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_lengths.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.postings.len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, tf: u32, doc: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let len_ratio = if self.avg_doc_length > 0.0 {
            self.doc_lengths[doc] as f64 / self.avg_doc_length
        } else {
            0.0
        };
        tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_ratio))
    }

    /// Score of one passage. Repeated query terms contribute once per
    /// occurrence.
    pub fn score(&self, query_terms: &[String], doc: usize) -> f64 {
        query_terms
            .iter()
            .filter_map(|term| {
                let list = self.postings.get(term)?;
                let pos = list.binary_search_by_key(&(doc as u32), |&(d, _)| d).ok()?;
                Some(self.idf(term) * self.term_weight(list[pos].1, doc))
            })
            .fold(0.0, |acc, x| acc + x)
    }

    /// Scores for every indexed passage, accumulated term-at-a-time.
    pub fn score_all(&self, query_terms: &[String]) -> Vec<f64> {
        let mut scores = vec![0.0; self.len()];
        for term in query_terms {
            let Some(list) = self.postings.get(term) else { continue };
            let idf = self.idf(term);
            for &(doc, tf) in list {
                scores[doc as usize] += idf * self.term_weight(tf, doc as usize);
            }
        }
        scores
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn terms(q: &str) -> Vec<String> {
        tokenize(q)
    }

    #[test]
    fn absent_term_scores_zero() {
        let idx = SparseIndex::build(["alpha beta", "gamma delta"], Bm25Params::default());
        assert_eq!(idx.score(&terms("omega"), 0), 0.0);
        assert!(idx.score_all(&terms("omega")).iter().all(|&s| s == 0.0));
    }

    #[test]
    fn single_doc_matches_hand_formula() {
        let idx = SparseIndex::build(["inflation rose sharply"], Bm25Params::default());
        // N=1, df=1 for every term: idf = ln(1 + 0.5/1.5); len == avglen so
        // each term weight is tf*(k1+1)/(tf+k1) with tf=1 → 1.
        let idf = (1.0f64 + 0.5 / 1.5).ln();
        let expected = 3.0 * idf * (1.0 * 1.9 / (1.0 + 0.9));
        let got = idx.score(&terms("inflation rose sharply"), 0);
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn repeated_term_doubles_summand() {
        let idx = SparseIndex::build(["tax cut", "tax hike now"], Bm25Params::default());
        let once = idx.score(&terms("cut"), 0);
        let twice = idx.score(&terms("cut cut"), 0);
        assert!(twice > once);
        assert!((twice - 2.0 * once).abs() < 1e-12);
    }

    #[test]
    fn score_all_agrees_with_score() {
        let idx = SparseIndex::build(
            ["a b c a", "b c d", "c d e e e", "a"],
            Bm25Params::default(),
        );
        let q = terms("a c e e");
        let all = idx.score_all(&q);
        for (doc, s) in all.iter().enumerate() {
            assert!((s - idx.score(&q, doc)).abs() < 1e-12);
        }
        assert_eq!(idx.avg_doc_length, (4 + 3 + 5 + 1) as f64 / 4.0);
    }

    #[test]
    fn unmatched_passage_scores_positive_zero() {
        let idx = SparseIndex::build(["alpha beta", "gamma"], Bm25Params::default());
        assert!(idx.score(&terms("alpha"), 1).is_sign_positive());
    }
}
