//! On-disk index layout:
//!
//! ```text
//! <dir>/manifest.json   format tag, BM25 parameters, embedder id, N, D, doc lengths
//! <dir>/corpus.jsonl    documents and passages (corpus file format)
//! <dir>/postings.jsonl  {"term": .., "postings": [[position, tf], ..]} per term
//! <dir>/vectors.jsonl   {"passage_id": .., "vector": [..]} per passage
//! ```

use super::{Bm25Params, DenseIndex, HybridIndex, RetrievalError, SparseIndex};
use crate::corpus::Corpus;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const INDEX_FORMAT: &str = "factcheck-index/v1";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    k1: f64,
    b: f64,
    embedder_id: String,
    passages: usize,
    dim: usize,
    avg_doc_length: f64,
    doc_lengths: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct PostingsLine {
    term: String,
    postings: Vec<(u32, u32)>,
}

#[derive(Serialize, Deserialize)]
struct VectorLine {
    passage_id: String,
    vector: Vec<f64>,
}

fn invalid(msg: impl Into<String>) -> RetrievalError {
    RetrievalError::InvalidIndex(msg.into())
}

fn write_json_line(out: &mut impl Write, value: &impl Serialize) -> Result<(), RetrievalError> {
    serde_json::to_writer(&mut *out, value).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

impl HybridIndex {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), RetrievalError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;

        let manifest = Manifest {
            format: INDEX_FORMAT.to_string(),
            k1: self.sparse.params.k1,
            b: self.sparse.params.b,
            embedder_id: self.dense.embedder_id.clone(),
            passages: self.passages.len(),
            dim: self.dense.dim,
            avg_doc_length: self.sparse.avg_doc_length,
            doc_lengths: self.sparse.doc_lengths.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::from)?;
        fs::write(dir.join("manifest.json"), text + "\n")?;

        let corpus = Corpus { documents: self.documents.clone(), passages: self.passages.clone() };
        corpus.save(dir.join("corpus.jsonl"))?;

        let mut out = BufWriter::new(File::create(dir.join("postings.jsonl"))?);
        for (term, postings) in &self.sparse.postings {
            write_json_line(&mut out, &PostingsLine { term: term.clone(), postings: postings.clone() })?;
        }
        out.flush()?;

        let mut out = BufWriter::new(File::create(dir.join("vectors.jsonl"))?);
        for (passage, vector) in self.passages.iter().zip(&self.dense.vectors) {
            write_json_line(
                &mut out,
                &VectorLine { passage_id: passage.passage_id.clone(), vector: vector.clone() },
            )?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let dir = dir.as_ref();
        let manifest_path = dir.join("manifest.json");
        if !manifest_path.exists() {
            return Err(invalid(format!("no manifest at {}", manifest_path.display())));
        }
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)
            .map_err(|e| invalid(format!("manifest: {e}")))?;
        if manifest.format != INDEX_FORMAT {
            return Err(invalid(format!(
                "unsupported index format `{}` (expected `{INDEX_FORMAT}`)",
                manifest.format
            )));
        }

        let corpus = Corpus::load(dir.join("corpus.jsonl"))?;
        let mut passages = corpus.passages;
        passages.sort_by(|a, b| a.passage_id.cmp(&b.passage_id));
        if passages.len() != manifest.passages || manifest.doc_lengths.len() != manifest.passages {
            return Err(invalid("passage count disagrees with manifest"));
        }

        let mut postings = BTreeMap::new();
        let reader = BufReader::new(File::open(dir.join("postings.jsonl"))?);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let rec: PostingsLine = serde_json::from_str(&line)
                .map_err(|e| invalid(format!("postings.jsonl line {}: {e}", i + 1)))?;
            if rec.postings.iter().any(|&(p, _)| p as usize >= manifest.passages) {
                return Err(invalid(format!("postings.jsonl line {}: position out of range", i + 1)));
            }
            postings.insert(rec.term, rec.postings);
        }

        let mut vectors = Vec::with_capacity(manifest.passages);
        let reader = BufReader::new(File::open(dir.join("vectors.jsonl"))?);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let rec: VectorLine = serde_json::from_str(&line)
                .map_err(|e| invalid(format!("vectors.jsonl line {}: {e}", i + 1)))?;
            if passages.get(i).map(|p| p.passage_id.as_str()) != Some(rec.passage_id.as_str()) {
                return Err(invalid(format!("vectors.jsonl line {}: passage order mismatch", i + 1)));
            }
            if rec.vector.len() != manifest.dim {
                return Err(RetrievalError::DimensionMismatch {
                    expected: manifest.dim,
                    got: rec.vector.len(),
                });
            }
            let norm = rec.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(invalid(format!("vectors.jsonl line {}: vector is not unit norm", i + 1)));
            }
            vectors.push(rec.vector);
        }
        if vectors.len() != passages.len() {
            return Err(invalid("vector count disagrees with manifest"));
        }

        let sparse = SparseIndex {
            postings,
            doc_lengths: manifest.doc_lengths,
            avg_doc_length: manifest.avg_doc_length,
            params: Bm25Params { k1: manifest.k1, b: manifest.b },
        };
        let dense = DenseIndex { vectors, embedder_id: manifest.embedder_id, dim: manifest.dim };
        Ok(HybridIndex::from_parts(corpus.documents, passages, sparse, dense))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ChunkConfig, SourceDocument, SourceTier};
    use crate::retrieval::HashEmbedder;

    #[test]
    fn save_load_round_trip() {
        let docs = vec![
            SourceDocument {
                doc_id: "gov".into(),
                title: "Budget office".into(),
                url: Some("https://example.gov/budget".into()),
                source_tier: SourceTier::Government,
                body: "The deficit shrank by four percent in 2023 according to the budget office.".into(),
            },
            SourceDocument {
                doc_id: "news".into(),
                title: "Daily".into(),
                url: None,
                source_tier: SourceTier::MajorNews,
                body: "Wages increased while unemployment stayed flat.".into(),
            },
        ];
        let corpus = Corpus::build(docs, ChunkConfig::default()).unwrap();
        let index = HybridIndex::build(&corpus, &HashEmbedder::default(), Bm25Params::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        index.save(dir.path()).unwrap();
        let loaded = HybridIndex::load(dir.path()).unwrap();
        assert_eq!(loaded, index);
    }

    #[test]
    fn missing_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            HybridIndex::load(dir.path().join("nope")),
            Err(RetrievalError::InvalidIndex(_))
        ));
    }
}
