//! Dense passage vectors and the embedders that produce them.

use super::tokenize::tokenize;
use super::RetrievalError;
use serde::Deserialize;
use std::time::Duration;

pub const HASH_EMBEDDER_DIM: usize = 256;
pub const HASH_EMBEDDER_ID: &str = "hash-bow-256-v1";

/// Maps text to a unit-norm vector. Implementations must be deterministic.
pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError>;
}

/// Signed feature hashing over word unigrams and character trigrams,
/// L2-normalized. Runs offline with no model files.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    id: String,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: HASH_EMBEDDER_DIM, id: HASH_EMBEDDER_ID.to_string() }
    }
}

impl HashEmbedder {
    pub fn with_dim(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        let id = if dim == HASH_EMBEDDER_DIM {
            HASH_EMBEDDER_ID.to_string()
        } else {
            format!("hash-bow-{dim}-v1")
        };
        Self { dim, id }
    }

    fn add_feature(&self, acc: &mut [f64], feature: &str, weight: f64) {
        let h = fnv1a(feature.as_bytes());
        let bucket = (h % self.dim as u64) as usize;
        let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
        acc[bucket] += sign * weight;
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        let mut acc = vec![0.0; self.dim];
        for token in tokenize(text) {
            self.add_feature(&mut acc, &format!("w:{token}"), 1.0);
            let padded: Vec<char> = format!("<{token}>").chars().collect();
            for gram in padded.windows(3) {
                let gram: String = gram.iter().collect();
                self.add_feature(&mut acc, &format!("c:{gram}"), 0.25);
            }
        }
        if l2_normalize(&mut acc).is_none() {
            // no features (or perfect cancellation): fall back to a fixed sentinel
            acc.iter_mut().for_each(|x| *x = 0.0);
            self.add_feature(&mut acc, "<empty>", 1.0);
            l2_normalize(&mut acc);
        }
        Ok(acc)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Scales `v` to unit length. Returns `None` when the norm is zero.
pub fn l2_normalize(v: &mut [f64]) -> Option<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Embedder backed by an OpenAI-compatible `/embeddings` endpoint.
pub struct HttpEmbedder {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    model: String,
    dim: usize,
    id: String,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl HttpEmbedder {
    pub fn new(endpoint: &str, api_key: Option<String>, model: &str, dim: usize) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .expect("http client");
        Self {
            client,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            api_key,
            model: model.to_string(),
            dim,
            id: format!("http:{model}"),
        }
    }

    pub fn request_body(&self, text: &str) -> serde_json::Value {
        serde_json::json!({ "model": self.model, "input": text })
    }

    pub fn parse_response(&self, body: &str) -> Result<Vec<f64>, RetrievalError> {
        let parsed: EmbeddingResponse = serde_json::from_str(body)
            .map_err(|e| RetrievalError::Embedding(format!("bad embedding response: {e}")))?;
        let mut v = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| RetrievalError::Embedding("empty embedding response".into()))?
            .embedding;
        if v.len() != self.dim {
            return Err(RetrievalError::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        l2_normalize(&mut v)
            .ok_or_else(|| RetrievalError::Embedding("zero embedding vector".into()))?;
        Ok(v)
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        let mut req = self
            .client
            .post(format!("{}/embeddings", self.endpoint))
            .json(&self.request_body(text));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| RetrievalError::Embedding(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| RetrievalError::Embedding(e.to_string()))?;
        if !status.is_success() {
            return Err(RetrievalError::Embedding(format!("HTTP {status}: {body}")));
        }
        self.parse_response(&body)
    }
}

/// Unit vectors for every indexed passage, in passage-list order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    pub vectors: Vec<Vec<f64>>,
    pub embedder_id: String,
    pub dim: usize,
}

impl DenseIndex {
    pub fn build<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        embedder: &dyn Embedder,
    ) -> Result<Self, RetrievalError> {
        let vectors = texts
            .into_iter()
            .map(|t| embedder.embed(t))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { vectors, embedder_id: embedder.id().to_string(), dim: embedder.dim() })
    }

    /// Cosine of unit vectors.
    pub fn score(&self, query: &[f64], idx: usize) -> Result<f64, RetrievalError> {
        dense_score(query, &self.vectors[idx])
    }
}

pub fn dense_score(query: &[f64], passage: &[f64]) -> Result<f64, RetrievalError> {
    if query.len() != passage.len() {
        return Err(RetrievalError::DimensionMismatch { expected: passage.len(), got: query.len() });
    }
    Ok(dot(query, passage).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_embedder_is_unit_and_deterministic() {
        let e = HashEmbedder::default();
        let a = e.embed("The senate passed the budget bill").unwrap();
        let b = e.embed("The senate passed the budget bill").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), HASH_EMBEDDER_DIM);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        let empty = e.embed("...").unwrap();
        assert!((dot(&empty, &empty) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn related_wording_scores_higher_than_unrelated() {
        let e = HashEmbedder::default();
        let q = e.embed("unemployment fell last year").unwrap();
        let near = e.embed("the unemployment rate fell").unwrap();
        let far = e.embed("volcanic eruptions in iceland").unwrap();
        assert!(dot(&q, &near) > dot(&q, &far));
    }

    #[test]
    fn dense_score_examples() {
        let v = vec![0.6, 0.8];
        let w = vec![-0.8, 0.6];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((dense_score(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!(dense_score(&v, &w).unwrap().abs() < 1e-12);
        assert!((dense_score(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(
            dense_score(&v, &[1.0, 0.0, 0.0]),
            Err(RetrievalError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn http_embedder_parses_openai_shape() {
        let e = HttpEmbedder::new("http://localhost:9/v1", None, "m", 2);
        let v = e.parse_response(r#"{"data":[{"embedding":[3.0,4.0]}]}"#).unwrap();
        assert_eq!(v, vec![0.6, 0.8]);
        assert!(e.parse_response(r#"{"data":[{"embedding":[1.0]}]}"#).is_err());
        assert_eq!(e.request_body("x")["model"], "m");
        assert_eq!(e.id(), "http:m");
    }
}
