//! Evidence corpus: source documents, normalization, overlapping passage
//! chunking and the line-delimited corpus file.
//!
//! A corpus file holds one JSON object per line. Document headers carry
//! `"kind":"document"` and are followed by their passages (`"kind":"passage"`).

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

pub const DEFAULT_CHUNK_SIZE: usize = 160;
pub const DEFAULT_OVERLAP: usize = 20;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("overlap ({overlap}) must be smaller than chunk size ({chunk_size})")]
    InvalidOverlap { chunk_size: usize, overlap: usize },
    #[error("document `{0}` has an empty body")]
    EmptyBody(String),
    #[error("document id must be nonempty")]
    EmptyDocId,
    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Credibility class of a source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceTier {
    Government,
    MajorNews,
    Academic,
    Encyclopedia,
    #[default]
    Other,
}

impl SourceTier {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceTier::Government => "government",
            SourceTier::MajorNews => "major_news",
            SourceTier::Academic => "academic",
            SourceTier::Encyclopedia => "encyclopedia",
            SourceTier::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub doc_id: String,
    pub title: String,
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub source_tier: SourceTier,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub passage_id: String,
    pub doc_id: String,
    pub ordinal: usize,
    pub text: String,
    /// Half-open `[start, end)` range in document word coordinates.
    pub word_span: [usize; 2],
}

impl Passage {
    pub fn word_count(&self) -> usize {
        self.word_span[1] - self.word_span[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkConfig {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self { chunk_size: DEFAULT_CHUNK_SIZE, overlap: DEFAULT_OVERLAP }
    }
}

impl ChunkConfig {
    pub fn new(chunk_size: usize, overlap: usize) -> Result<Self, CorpusError> {
        if chunk_size == 0 || overlap >= chunk_size {
            return Err(CorpusError::InvalidOverlap { chunk_size, overlap });
        }
        Ok(Self { chunk_size, overlap })
    }

    pub fn stride(&self) -> usize {
        self.chunk_size - self.overlap
    }
}

/// NFC-normalizes `text`, converts CR/CRLF to LF, collapses whitespace runs
/// inside each line to one space and trims line and text ends.
pub fn normalize(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    let unified = nfc.replace("\r\n", "\n").replace('\r', "\n");
    let lines: Vec<String> = unified
        .split('\n')
        .map(|line| line.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect();
    lines.join("\n").trim().to_string()
}

/// Splits a document into overlapping word windows.
///
/// Windows start at multiples of the stride; a window whose end would not
/// move past the previous window's end is suppressed, so the tail is never
/// duplicated.
pub fn chunk(doc: &SourceDocument, config: ChunkConfig) -> Result<Vec<Passage>, CorpusError> {
    if config.chunk_size == 0 || config.overlap >= config.chunk_size {
        return Err(CorpusError::InvalidOverlap {
            chunk_size: config.chunk_size,
            overlap: config.overlap,
        });
    }
    let body = normalize(&doc.body);
    let words: Vec<&str> = body.split_whitespace().collect();
    if words.is_empty() {
        return Err(CorpusError::EmptyBody(doc.doc_id.clone()));
    }

    let total = words.len();
    let stride = config.stride();
    let mut passages = Vec::new();
    let mut start = 0;
    let mut prev_end = 0;
    while start < total {
        let end = (start + config.chunk_size).min(total);
        if !passages.is_empty() && end <= prev_end {
            break;
        }
        let ordinal = passages.len();
        passages.push(Passage {
            passage_id: format!("{}#{}", doc.doc_id, ordinal),
            doc_id: doc.doc_id.clone(),
            ordinal,
            text: words[start..end].join(" "),
            word_span: [start, end],
        });
        prev_end = end;
        start += stride;
    }
    Ok(passages)
}

/// Documents plus their passages. Immutable once built or loaded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub documents: Vec<SourceDocument>,
    pub passages: Vec<Passage>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum CorpusRecord {
    Document(SourceDocument),
    Passage(Passage),
}

impl Corpus {
    /// Normalizes and chunks every document. Fails on empty/duplicate ids or
    /// bodies that are empty after normalization.
    pub fn build(
        documents: Vec<SourceDocument>,
        config: ChunkConfig,
    ) -> Result<Corpus, CorpusError> {
        let mut seen = HashSet::new();
        let mut corpus = Corpus::default();
        for mut doc in documents {
            if doc.doc_id.trim().is_empty() {
                return Err(CorpusError::EmptyDocId);
            }
            if !seen.insert(doc.doc_id.clone()) {
                return Err(CorpusError::DuplicateDocId(doc.doc_id));
            }
            doc.body = normalize(&doc.body);
            if doc.body.is_empty() {
                return Err(CorpusError::EmptyBody(doc.doc_id));
            }
            corpus.passages.extend(chunk(&doc, config)?);
            corpus.documents.push(doc);
        }
        Ok(corpus)
    }

    pub fn document(&self, doc_id: &str) -> Option<&SourceDocument> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<(), CorpusError> {
        for doc in &self.documents {
            write_record(out, &CorpusRecord::Document(doc.clone()))?;
            for passage in self.passages.iter().filter(|p| p.doc_id == doc.doc_id) {
                write_record(out, &CorpusRecord::Passage(passage.clone()))?;
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
        Corpus::read_from(BufReader::new(File::open(path)?))
    }

    pub fn read_from(reader: impl BufRead) -> Result<Corpus, CorpusError> {
        let mut corpus = Corpus::default();
        let mut seen = HashSet::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| {
                CorpusError::Malformed { line: line_no, message: e.to_string() }
            })?;
            match record {
                CorpusRecord::Document(doc) => {
                    if !seen.insert(doc.doc_id.clone()) {
                        return Err(CorpusError::Malformed {
                            line: line_no,
                            message: format!("duplicate document id `{}`", doc.doc_id),
                        });
                    }
                    corpus.documents.push(doc);
                }
                CorpusRecord::Passage(passage) => {
                    if !seen.contains(&passage.doc_id) {
                        return Err(CorpusError::Malformed {
                            line: line_no,
                            message: format!(
                                "passage `{}` precedes or lacks its document header",
                                passage.passage_id
                            ),
                        });
                    }
                    corpus.passages.push(passage);
                }
            }
        }
        Ok(corpus)
    }
}

fn write_record(out: &mut impl Write, record: &CorpusRecord) -> Result<(), CorpusError> {
    serde_json::to_writer(&mut *out, record).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}
