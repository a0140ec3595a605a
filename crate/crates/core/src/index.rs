//! Exact cosine-similarity index over document chunks.
//!
//! Search is a full scan restricted to entries whose metadata satisfies
//! every filter equality. Results are ordered by descending score, ties by
//! ascending chunk id. The index is safe to share: searches take a read
//! lock, upserts a write lock.
//!
//! Persisted form is JSON lines. Line 1 is a header with the dimension,
//! entry count and the tokenizer/embedder tags; every following line is one
//! entry. Files are written to a temporary sibling and renamed into place.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunk::{ChunkMetadata, DocumentChunk};
use crate::embed::{cosine_with_norms, EmbeddingVector};

pub const DEFAULT_K: usize = 3;
const FORMAT_NAME: &str = "docrag-index";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("vector dimension mismatch: index has {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("invalid filter {0:?}: expected <field>=<value> with field one of document_id, company, year, quarter, page_number, section_title")]
    InvalidFilter(String),
    #[error("index dimension must be at least 1")]
    ZeroDimension,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("corrupt index file at byte {offset}: {message}")]
    Corrupt { offset: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub chunk: DocumentChunk,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterField {
    DocumentId,
    Company,
    Year,
    Quarter,
    PageNumber,
    SectionTitle,
}

impl FilterField {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterField::DocumentId => "document_id",
            FilterField::Company => "company",
            FilterField::Year => "year",
            FilterField::Quarter => "quarter",
            FilterField::PageNumber => "page_number",
            FilterField::SectionTitle => "section_title",
        }
    }
}

impl FromStr for FilterField {
    type Err = IndexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "document_id" => FilterField::DocumentId,
            "company" => FilterField::Company,
            "year" => FilterField::Year,
            "quarter" => FilterField::Quarter,
            "page_number" | "page" => FilterField::PageNumber,
            "section_title" => FilterField::SectionTitle,
            _ => return Err(IndexError::InvalidFilter(s.to_string())),
        })
    }
}

/// Equality constraint on one metadata field. Absent fields never match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataFilter {
    pub field: FilterField,
    pub value: String,
}

impl MetadataFilter {
    pub fn new(field: FilterField, value: impl Into<String>) -> Self {
        Self {
            field,
            value: value.into(),
        }
    }

    pub fn matches(&self, meta: &ChunkMetadata) -> bool {
        let v = self.value.as_str();
        match self.field {
            FilterField::DocumentId => meta.document_id == v,
            FilterField::Company => meta.company.as_deref() == Some(v),
            FilterField::Year => meta.year.is_some_and(|y| y.to_string() == v),
            FilterField::Quarter => meta.quarter.as_deref() == Some(v),
            FilterField::PageNumber => meta.page_number.to_string() == v,
            FilterField::SectionTitle => meta.section_title.as_deref() == Some(v),
        }
    }
}

impl FromStr for MetadataFilter {
    type Err = IndexError;

    /// `field=value`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (field, value) = s
            .split_once('=')
            .ok_or_else(|| IndexError::InvalidFilter(s.to_string()))?;
        let field = field
            .trim()
            .parse()
            .map_err(|_| IndexError::InvalidFilter(s.to_string()))?;
        Ok(Self::new(field, value))
    }
}

impl fmt::Display for MetadataFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.field.as_str(), self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    k: usize,
    pub filters: Vec<MetadataFilter>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            filters: Vec::new(),
        }
    }
}

impl RetrievalConfig {
    pub fn new(k: usize, filters: Vec<MetadataFilter>) -> Result<Self, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        Ok(Self { k, filters })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn with_filter(mut self, filter: MetadataFilter) -> Self {
        self.filters.push(filter);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub chunk: DocumentChunk,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpsertAck {
    /// An entry with the same chunk id was replaced.
    pub replaced: bool,
    /// The vector is all zeros and will score 0 against every query.
    pub zero_vector: bool,
}

#[derive(Debug, Clone)]
struct Stored {
    entry: IndexEntry,
    norm: f64,
}

#[derive(Debug)]
pub struct VectorIndex {
    dimension: usize,
    tokenizer_tag: String,
    provider_tag: String,
    entries: RwLock<BTreeMap<String, Stored>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    dimension: usize,
    count: usize,
    tokenizer: String,
    provider: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PersistedEntry {
    chunk_id: String,
    text: String,
    token_count: usize,
    metadata: ChunkMetadata,
    vector: EmbeddingVector,
}

impl VectorIndex {
    pub fn new(
        dimension: usize,
        tokenizer_tag: impl Into<String>,
        provider_tag: impl Into<String>,
    ) -> Result<Self, IndexError> {
        if dimension == 0 {
            return Err(IndexError::ZeroDimension);
        }
        Ok(Self {
            dimension,
            tokenizer_tag: tokenizer_tag.into(),
            provider_tag: provider_tag.into(),
            entries: RwLock::new(BTreeMap::new()),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn tokenizer_tag(&self) -> &str {
        &self.tokenizer_tag
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.read().is_empty()
    }

    pub fn get(&self, chunk_id: &str) -> Option<IndexEntry> {
        self.entries.read().get(chunk_id).map(|s| s.entry.clone())
    }

    /// Snapshot of all entries in chunk-id order.
    pub fn entries(&self) -> Vec<IndexEntry> {
        self.entries.read().values().map(|s| s.entry.clone()).collect()
    }

    pub fn contains_document(&self, document_id: &str) -> bool {
        self.entries
            .read()
            .values()
            .any(|s| s.entry.chunk.metadata.document_id == document_id)
    }

    fn check_dimension(&self, vector: &EmbeddingVector) -> Result<(), IndexError> {
        if vector.dimension() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                actual: vector.dimension(),
            });
        }
        Ok(())
    }

    pub fn upsert(&self, entry: IndexEntry) -> Result<UpsertAck, IndexError> {
        self.check_dimension(&entry.vector)?;
        let zero_vector = entry.vector.is_zero();
        if zero_vector {
            log::warn!("chunk {} has an all-zero embedding", entry.chunk.chunk_id);
        }
        let norm = entry.vector.norm();
        let id = entry.chunk.chunk_id.clone();
        let replaced = self.entries.write().insert(id, Stored { entry, norm }).is_some();
        Ok(UpsertAck {
            replaced,
            zero_vector,
        })
    }

    pub fn search(&self, query: &EmbeddingVector, config: &RetrievalConfig) -> Result<Vec<RetrievalResult>, IndexError> {
        self.check_dimension(query)?;
        let q_norm = query.norm();
        let entries = self.entries.read();
        let mut scored: Vec<(f64, &Stored)> = entries
            .values()
            .filter(|s| config.filters.iter().all(|f| f.matches(&s.entry.chunk.metadata)))
            .map(|s| {
                (
                    cosine_with_norms(query.values(), q_norm, s.entry.vector.values(), s.norm),
                    s,
                )
            })
            .collect();
        let by_rank = |a: &(f64, &Stored), b: &(f64, &Stored)| {
            b.0.total_cmp(&a.0)
                .then_with(|| a.1.entry.chunk.chunk_id.cmp(&b.1.entry.chunk.chunk_id))
        };
        if scored.len() > config.k {
            scored.select_nth_unstable_by(config.k - 1, by_rank);
            scored.truncate(config.k);
        }
        scored.sort_by(by_rank);
        Ok(scored
            .into_iter()
            .map(|(score, s)| RetrievalResult {
                chunk: s.entry.chunk.clone(),
                score,
            })
            .collect())
    }

    pub fn to_jsonl(&self) -> String {
        let entries = self.entries.read();
        let header = Header {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            dimension: self.dimension,
            count: entries.len(),
            tokenizer: self.tokenizer_tag.clone(),
            provider: self.provider_tag.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for stored in entries.values() {
            let chunk = &stored.entry.chunk;
            let line = PersistedEntry {
                chunk_id: chunk.chunk_id.clone(),
                text: chunk.text.clone(),
                token_count: chunk.token_count,
                metadata: chunk.metadata.clone(),
                vector: stored.entry.vector.clone(),
            };
            out.push_str(&serde_json::to_string(&line).expect("entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, IndexError> {
        let corrupt = |offset: usize, message: String| IndexError::Corrupt { offset, message };
        let json_err = |line_start: usize, e: serde_json::Error| {
            corrupt(line_start + e.column().saturating_sub(1), e.to_string())
        };

        let mut lines = Vec::new();
        let mut offset = 0usize;
        for line in text.split_inclusive('\n') {
            let content = line.trim_end_matches(['\n', '\r']);
            if !content.trim().is_empty() {
                lines.push((offset, content));
            }
            offset += line.len();
        }
        let Some(&(header_at, header_line)) = lines.first() else {
            return Err(corrupt(0, "missing header line".into()));
        };
        let header: Header = serde_json::from_str(header_line).map_err(|e| json_err(header_at, e))?;
        if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
            return Err(corrupt(
                header_at,
                format!("unsupported format {} v{}", header.format, header.version),
            ));
        }
        let index = VectorIndex::new(header.dimension, header.tokenizer, header.provider)
            .map_err(|e| corrupt(header_at, e.to_string()))?;
        for &(at, line) in &lines[1..] {
            let entry: PersistedEntry = serde_json::from_str(line).map_err(|e| json_err(at, e))?;
            if index.get(&entry.chunk_id).is_some() {
                return Err(corrupt(at, format!("duplicate chunk id {}", entry.chunk_id)));
            }
            index
                .upsert(IndexEntry {
                    chunk: DocumentChunk {
                        chunk_id: entry.chunk_id,
                        text: entry.text,
                        token_count: entry.token_count,
                        metadata: entry.metadata,
                    },
                    vector: entry.vector,
                })
                .map_err(|e| corrupt(at, e.to_string()))?;
        }
        if index.len() != header.count {
            return Err(corrupt(
                text.len(),
                format!("header declares {} entries, file has {}", header.count, index.len()),
            ));
        }
        Ok(index)
    }

    /// Writes atomically: temp file in the same directory, then rename.
    pub fn persist(&self, path: &Path) -> Result<(), IndexError> {
        let io = |e: std::io::Error| IndexError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(self.to_jsonl().as_bytes()).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(path).map_err(|e| io(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let bytes = std::fs::read(path).map_err(|e| IndexError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let text = String::from_utf8(bytes).map_err(|e| IndexError::Corrupt {
            offset: e.utf8_error().valid_up_to(),
            message: "invalid UTF-8".into(),
        })?;
        Self::from_jsonl(&text)
    }
}
