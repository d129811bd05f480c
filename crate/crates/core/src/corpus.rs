//! Abstract corpus ingestion, embeddings and flat inner-product retrieval.
//!
//! Every vector held by a [`CorpusIndex`] is L2-normalised, so the inner
//! product of two stored vectors is their cosine similarity. Search is an
//! exhaustive scan: at the corpus sizes this crate targets, exactness is
//! cheaper than maintaining an approximate index.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default embedding dimension (sentence-transformer MiniLM family).
pub const DEFAULT_DIMENSION: usize = 384;

/// Tolerance for the unit-norm invariant on stored embeddings.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("degenerate embedding: vector has zero or non-finite norm")]
    DegenerateEmbedding,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("duplicate doc_id `{0}`")]
    DuplicateDocId(String),
    #[error("corpus line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding provider failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A unit-norm embedding vector.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    /// Inner product with another vector of the same dimension.
    pub fn dot(&self, other: &EmbeddingVector) -> Result<f64, CorpusError> {
        if self.dimension() != other.dimension() {
            return Err(CorpusError::DimensionMismatch { expected: self.dimension(), actual: other.dimension() });
        }
        Ok(dot(&self.0, &other.0))
    }

    /// Cosine similarity of two unit vectors, clamped into `[-1, 1]`.
    pub fn cosine(&self, other: &EmbeddingVector) -> Result<f64, CorpusError> {
        Ok(self.dot(other)?.clamp(-1.0, 1.0))
    }
}

impl fmt::Debug for EmbeddingVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() <= 8 {
            f.debug_tuple("EmbeddingVector").field(&self.0).finish()
        } else {
            write!(f, "EmbeddingVector(dim={}, head={:?})", self.0.len(), &self.0[..4])
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `v` to unit L2 norm.
pub fn normalize(v: &[f64]) -> Result<EmbeddingVector, CorpusError> {
    let norm = l2_norm(v);
    if norm == 0.0 || !norm.is_finite() {
        return Err(CorpusError::DegenerateEmbedding);
    }
    Ok(EmbeddingVector(v.iter().map(|x| x / norm).collect()))
}

/// `1 - max cos(candidate, p)` over the pool, clamped into `[0, 1]`.
///
/// An empty pool yields 1.0: nothing has been seen yet, so everything is new.
pub fn novelty(candidate: &EmbeddingVector, pool: &[EmbeddingVector]) -> Result<f64, CorpusError> {
    Ok(match max_similarity(candidate, pool)? {
        None => 1.0,
        Some(max) => (1.0 - max).clamp(0.0, 1.0),
    })
}

/// Largest clamped cosine between `candidate` and any pool member.
pub fn max_similarity(candidate: &EmbeddingVector, pool: &[EmbeddingVector]) -> Result<Option<f64>, CorpusError> {
    let mut best: Option<f64> = None;
    for item in pool {
        let c = candidate.cosine(item)?;
        best = Some(best.map_or(c, |b| b.max(c)));
    }
    Ok(best)
}

/// Anything that can turn text into a unit embedding.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, CorpusError>;
}

/// Deterministic, network-free embedder.
///
/// Lower-cased word unigrams and bigrams are hashed (FNV-1a, keyed by the
/// seed) into `dimension` signed buckets and the result is normalised. The
/// output depends only on text, seed and dimension.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension, seed }
    }

    fn hash(&self, token: &str) -> u64 {
        const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        for b in token.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        // final avalanche so nearby hashes spread across buckets
        h ^= h >> 33;
        h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
        h ^= h >> 33;
        h
    }

    fn accumulate(&self, acc: &mut [f64], feature: &str, weight: f64) {
        let h = self.hash(feature);
        let bucket = (h % self.dimension as u64) as usize;
        let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
        acc[bucket] += sign * weight;
    }
}

impl Embedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, CorpusError> {
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText);
        }
        let lowered = text.to_lowercase();
        let tokens: Vec<&str> = lowered.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).collect();
        let mut acc = vec![0.0; self.dimension];
        if tokens.is_empty() {
            // punctuation-only text still gets a stable vector
            self.accumulate(&mut acc, lowered.trim(), 1.0);
        }
        for t in &tokens {
            self.accumulate(&mut acc, t, 1.0);
        }
        for pair in tokens.windows(2) {
            self.accumulate(&mut acc, &format!("{} {}", pair[0], pair[1]), 0.5);
        }
        match normalize(&acc) {
            Ok(v) => Ok(v),
            // every feature cancelled out; fall back to the whole-text feature
            Err(CorpusError::DegenerateEmbedding) => {
                let mut acc = vec![0.0; self.dimension];
                self.accumulate(&mut acc, &lowered, 1.0);
                normalize(&acc)
            }
            Err(e) => Err(e),
        }
    }
}

/// Embedding endpoint speaking the common `{model, input}` -> `{data: [{embedding}]}` shape.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    url: String,
    model: String,
    dimension: usize,
    api_key: Option<String>,
    max_retries: u32,
    backoff: Duration,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(
        url: impl Into<String>,
        model: impl Into<String>,
        dimension: usize,
        api_key: Option<String>,
        timeout: Duration,
        max_retries: u32,
    ) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        Self {
            url: url.into(),
            model: model.into(),
            dimension,
            api_key,
            max_retries,
            backoff: Duration::from_millis(250),
            agent,
        }
    }

    fn request_once(&self, text: &str) -> Result<Vec<f64>, (bool, String)> {
        let body = serde_json::json!({ "model": self.model, "input": text });
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        if status >= 500 || status == 429 {
            return Err((true, format!("HTTP {status}")));
        }
        if status >= 400 {
            return Err((false, format!("HTTP {status}")));
        }
        let value: serde_json::Value =
            resp.body_mut().read_json().map_err(|e| (false, format!("invalid JSON body: {e}")))?;
        let raw = value
            .pointer("/data/0/embedding")
            .or_else(|| value.get("embedding"))
            .and_then(|v| v.as_array())
            .ok_or_else(|| (false, "response carries no embedding".to_string()))?;
        raw.iter().map(|x| x.as_f64().ok_or_else(|| (false, "non-numeric component".to_string()))).collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, CorpusError> {
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText);
        }
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.request_once(text) {
                Ok(raw) => {
                    if raw.len() != self.dimension {
                        return Err(CorpusError::DimensionMismatch { expected: self.dimension, actual: raw.len() });
                    }
                    return normalize(&raw);
                }
                Err((retryable, message)) => {
                    if !retryable || attempt > self.max_retries {
                        return Err(CorpusError::Transport { attempts: attempt, message });
                    }
                    std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
                }
            }
        }
    }
}

/// One abstract as it appears in the corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub doc_id: String,
    pub title: String,
    pub body: String,
    pub journal: String,
    pub year: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl CorpusRecord {
    /// Text used both for embedding and for showing the record to agents.
    pub fn passage(&self) -> String {
        format!("{}. {}", self.title, self.body)
    }
}

/// Reads a JSON-lines corpus file. Blank lines are skipped.
pub fn read_corpus_jsonl(path: &Path) -> Result<Vec<CorpusRecord>, CorpusError> {
    let file = std::fs::File::open(path)?;
    parse_corpus_lines(std::io::BufReader::new(file))
}

pub fn parse_corpus_lines(reader: impl BufRead) -> Result<Vec<CorpusRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(record);
    }
    Ok(out)
}

/// A hit from [`CorpusIndex::search`].
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalHit<'a> {
    /// Position of the record in [`CorpusIndex::records`].
    pub position: usize,
    pub doc_id: &'a str,
    pub similarity: f64,
    pub record: &'a CorpusRecord,
    pub embedding: &'a EmbeddingVector,
}

/// Immutable flat inner-product index.
#[derive(Debug, Clone)]
pub struct CorpusIndex {
    records: Vec<CorpusRecord>,
    embeddings: Vec<EmbeddingVector>,
    dimension: usize,
}

impl CorpusIndex {
    /// Ingests records, normalising supplied embeddings and computing missing
    /// ones with `embedder`.
    pub fn ingest(records: Vec<CorpusRecord>, embedder: &dyn Embedder) -> Result<Self, CorpusError> {
        let dimension = embedder.dimension();
        let mut seen = HashSet::with_capacity(records.len());
        let mut embeddings = Vec::with_capacity(records.len());
        for rec in &records {
            if !seen.insert(rec.doc_id.as_str()) {
                return Err(CorpusError::DuplicateDocId(rec.doc_id.clone()));
            }
            let v = match &rec.embedding {
                Some(raw) => {
                    if raw.len() != dimension {
                        return Err(CorpusError::DimensionMismatch { expected: dimension, actual: raw.len() });
                    }
                    normalize(raw)?
                }
                None => embedder.embed(&rec.passage())?,
            };
            embeddings.push(v);
        }
        let mut records = records;
        for (rec, v) in records.iter_mut().zip(&embeddings) {
            if rec.embedding.is_some() {
                rec.embedding = Some(v.as_slice().to_vec());
            }
        }
        Ok(Self { records, embeddings, dimension })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn records(&self) -> &[CorpusRecord] {
        &self.records
    }

    pub fn embedding(&self, idx: usize) -> &EmbeddingVector {
        &self.embeddings[idx]
    }

    /// Exhaustive top-k by inner product; ties go to the smaller doc_id.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievalHit<'_>>, CorpusError> {
        if self.records.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        if k == 0 {
            return Err(CorpusError::ZeroK);
        }
        if query.dimension() != self.dimension {
            return Err(CorpusError::DimensionMismatch { expected: self.dimension, actual: query.dimension() });
        }
        let mut scored: Vec<(f64, usize)> =
            self.embeddings.iter().enumerate().map(|(i, e)| (dot(query.as_slice(), e.as_slice()), i)).collect();
        let by_rank = |a: &(f64, usize), b: &(f64, usize)| {
            b.0.total_cmp(&a.0).then_with(|| self.records[a.1].doc_id.cmp(&self.records[b.1].doc_id))
        };
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_by(by_rank);
        Ok(scored
            .into_iter()
            .map(|(s, i)| RetrievalHit {
                position: i,
                doc_id: &self.records[i].doc_id,
                similarity: s.clamp(-1.0, 1.0),
                record: &self.records[i],
                embedding: &self.embeddings[i],
            })
            .collect())
    }
}
