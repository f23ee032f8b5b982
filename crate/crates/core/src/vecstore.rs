//! Clause store: fixed-dimension embeddings, exact cosine top-k search and a
//! line-oriented JSON persistence format.
//!
//! File layout: a header line `{"format_version":1,"dim":D,"count":N}` then
//! exactly `N` lines, one JSON [`ClauseRecord`] each.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{RwLock, RwLockReadGuard, RwLockWriteGuard};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::draft::SectionKey;

pub const DEFAULT_DIM: usize = 384;
pub const DEFAULT_MIN_SCORE: f64 = 0.70;
pub const DEFAULT_FEEDBACK_ALPHA: f64 = 0.1;
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum VecStoreError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("embedding must be non-empty and finite")]
    InvalidEmbedding,
    #[error("feedback average {0} outside [-1, 1]")]
    FeedbackOutOfRange(f64),
    #[error("unknown clause {0}")]
    UnknownClause(String),
    #[error("load error at line {line}: {reason}")]
    Load { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A finite, non-empty vector. Its dimension is its length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self, VecStoreError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(VecStoreError::InvalidEmbedding);
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = VecStoreError;
    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Embedding::new(values)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.values
    }
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, VecStoreError> {
    if a.dim() != b.dim() {
        return Err(VecStoreError::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(VecStoreError::ZeroNorm);
    }
    Ok((dot(a.values(), b.values()) / (na * nb)).clamp(-1.0, 1.0))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseRecord {
    pub clause_id: String,
    pub text: String,
    pub canonical_key: Option<SectionKey>,
    pub source_doc_id: String,
    pub embedding: Embedding,
    #[serde(default)]
    pub feedback_avg: f64,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub clause_id: String,
    pub raw_score: f64,
    pub adjusted_score: f64,
}

/// Feedback re-rank: `raw * (1 + alpha * avg)`, with `avg` clamped to `[-1, 1]`.
pub fn adjusted_score(raw: f64, feedback_avg: f64, alpha: f64) -> f64 {
    raw * (1.0 + alpha * feedback_avg.clamp(-1.0, 1.0))
}

/// Ranking order for hits: adjusted score descending, then clause id ascending.
pub fn rank_order(a: &RetrievalHit, b: &RetrievalHit) -> std::cmp::Ordering {
    b.adjusted_score.total_cmp(&a.adjusted_score).then_with(|| a.clause_id.cmp(&b.clause_id))
}

/// Read side of a clause store. Implementations must return a consistent view
/// per call.
pub trait ClauseIndex {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn get(&self, clause_id: &str) -> Option<ClauseRecord>;
    /// Exact search returning hits together with their records.
    fn search_records(
        &self,
        query: &Embedding,
        k: usize,
        min_score: f64,
    ) -> Result<Vec<(RetrievalHit, ClauseRecord)>, VecStoreError>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn search(&self, query: &Embedding, k: usize, min_score: f64) -> Result<Vec<RetrievalHit>, VecStoreError> {
        Ok(self.search_records(query, k, min_score)?.into_iter().map(|(h, _)| h).collect())
    }
}

#[derive(Debug, Clone)]
struct Entry {
    record: ClauseRecord,
    norm: f64,
}

/// In-memory clause store with exact linear-scan search.
#[derive(Debug, Clone)]
pub struct ClauseStore {
    dim: usize,
    feedback_alpha: f64,
    entries: BTreeMap<String, Entry>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dim: usize,
    count: usize,
}

impl ClauseStore {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "store dimension must be positive");
        Self { dim, feedback_alpha: DEFAULT_FEEDBACK_ALPHA, entries: BTreeMap::new() }
    }

    pub fn with_feedback_alpha(mut self, alpha: f64) -> Self {
        self.feedback_alpha = alpha;
        self
    }

    pub fn feedback_alpha(&self) -> f64 {
        self.feedback_alpha
    }

    pub fn set_feedback_alpha(&mut self, alpha: f64) {
        self.feedback_alpha = alpha;
    }

    pub fn upsert(&mut self, record: ClauseRecord) -> Result<(), VecStoreError> {
        if record.embedding.dim() != self.dim {
            return Err(VecStoreError::DimensionMismatch { expected: self.dim, found: record.embedding.dim() });
        }
        if !(-1.0..=1.0).contains(&record.feedback_avg) {
            return Err(VecStoreError::FeedbackOutOfRange(record.feedback_avg));
        }
        let norm = record.embedding.norm();
        self.entries.insert(record.clause_id.clone(), Entry { record, norm });
        Ok(())
    }

    pub fn set_feedback(&mut self, clause_id: &str, avg: f64) -> Result<(), VecStoreError> {
        let entry = self.entries.get_mut(clause_id).ok_or_else(|| VecStoreError::UnknownClause(clause_id.into()))?;
        entry.record.feedback_avg = avg.clamp(-1.0, 1.0);
        Ok(())
    }

    pub fn records(&self) -> impl Iterator<Item = &ClauseRecord> {
        self.entries.values().map(|e| &e.record)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VecStoreError> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("tmp");
        {
            let mut out = BufWriter::new(File::create(&tmp)?);
            self.write_to(&mut out)?;
            out.flush()?;
        }
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    fn write_to(&self, out: &mut impl Write) -> Result<(), VecStoreError> {
        let header = Header { format_version: FORMAT_VERSION, dim: self.dim, count: self.entries.len() };
        serde_json::to_writer(&mut *out, &header).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        for entry in self.entries.values() {
            serde_json::to_writer(&mut *out, &entry.record).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Load a store, requiring the file's dimension to equal `dim`.
    pub fn load(path: impl AsRef<Path>, dim: usize) -> Result<Self, VecStoreError> {
        let store = Self::load_any(path)?;
        if store.dim != dim {
            return Err(VecStoreError::DimensionMismatch { expected: dim, found: store.dim });
        }
        Ok(store)
    }

    /// Load a store with whatever dimension its header declares.
    pub fn load_any(path: impl AsRef<Path>) -> Result<Self, VecStoreError> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines();
        let header_line = lines.next().ok_or(VecStoreError::Load { line: 1, reason: "missing header".into() })??;
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| VecStoreError::Load { line: 1, reason: format!("bad header: {e}") })?;
        if header.format_version != FORMAT_VERSION {
            return Err(VecStoreError::Load {
                line: 1,
                reason: format!("unsupported format_version {}", header.format_version),
            });
        }
        if header.dim == 0 {
            return Err(VecStoreError::Load { line: 1, reason: "dim must be positive".into() });
        }
        let mut store = Self::new(header.dim);
        let mut seen = 0usize;
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ClauseRecord = serde_json::from_str(&line)
                .map_err(|e| VecStoreError::Load { line: line_no, reason: e.to_string() })?;
            store.upsert(record).map_err(|e| VecStoreError::Load { line: line_no, reason: e.to_string() })?;
            seen += 1;
        }
        if seen != header.count {
            return Err(VecStoreError::Load {
                line: seen + 2,
                reason: format!("header declares {} records, found {seen}", header.count),
            });
        }
        Ok(store)
    }

    /// SHA-256 of the serialized store, hex encoded.
    pub fn checksum(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        hex_digest(&buf)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ClauseIndex for ClauseStore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.entries.len()
    }

    fn get(&self, clause_id: &str) -> Option<ClauseRecord> {
        self.entries.get(clause_id).map(|e| e.record.clone())
    }

    fn search_records(
        &self,
        query: &Embedding,
        k: usize,
        min_score: f64,
    ) -> Result<Vec<(RetrievalHit, ClauseRecord)>, VecStoreError> {
        if query.dim() != self.dim {
            return Err(VecStoreError::DimensionMismatch { expected: self.dim, found: query.dim() });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let qn = query.norm();
        if qn == 0.0 {
            return Err(VecStoreError::ZeroNorm);
        }
        let mut hits: Vec<(RetrievalHit, &ClauseRecord)> = self
            .entries
            .values()
            .filter(|e| e.norm > 0.0)
            .filter_map(|e| {
                let raw = (dot(query.values(), e.record.embedding.values()) / (qn * e.norm)).clamp(-1.0, 1.0);
                (raw >= min_score).then(|| {
                    let hit = RetrievalHit {
                        clause_id: e.record.clause_id.clone(),
                        raw_score: raw,
                        adjusted_score: adjusted_score(raw, e.record.feedback_avg, self.feedback_alpha),
                    };
                    (hit, &e.record)
                })
            })
            .collect();
        hits.sort_by(|a, b| rank_order(&a.0, &b.0));
        hits.truncate(k);
        Ok(hits.into_iter().map(|(h, r)| (h, r.clone())).collect())
    }
}

/// A store shared between concurrent readers and a single writer.
#[derive(Debug, Clone)]
pub struct SharedStore(Arc<RwLock<ClauseStore>>);

impl SharedStore {
    pub fn new(store: ClauseStore) -> Self {
        Self(Arc::new(RwLock::new(store)))
    }

    pub fn read(&self) -> RwLockReadGuard<'_, ClauseStore> {
        self.0.read()
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, ClauseStore> {
        self.0.write()
    }
}

impl ClauseIndex for SharedStore {
    fn dim(&self) -> usize {
        self.read().dim()
    }

    fn len(&self) -> usize {
        self.read().len()
    }

    fn get(&self, clause_id: &str) -> Option<ClauseRecord> {
        self.read().get(clause_id)
    }

    fn search_records(
        &self,
        query: &Embedding,
        k: usize,
        min_score: f64,
    ) -> Result<Vec<(RetrievalHit, ClauseRecord)>, VecStoreError> {
        self.read().search_records(query, k, min_score)
    }
}
