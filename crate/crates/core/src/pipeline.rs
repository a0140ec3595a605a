//! Ingestion: layout payloads → page content → chunks → embedded index.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunk::{split_pages, ChunkError, DEFAULT_CHUNK_SIZE};
use crate::embed::{embed, EmbedError, Embedder};
use crate::index::{IndexEntry, IndexError, VectorIndex};
use crate::layout::{parse_layout, LayoutError, LayoutPayload};
use crate::preprocess::{preprocess_document, ChartProvider, PreprocessOptions};
use crate::record::TableFormat;
use crate::tokenize::Tokenizer;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {source}")]
    Layout { path: String, source: LayoutError },
    #[error("document {document_id} appears in both {first} and {second}")]
    DuplicateDocument {
        document_id: String,
        first: String,
        second: String,
    },
    #[error("no layout files (*.json) in {0}")]
    NoInputs(String),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub table_format: TableFormat,
    pub chunk_size: usize,
    pub max_in_flight: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            table_format: TableFormat::Json,
            chunk_size: DEFAULT_CHUNK_SIZE,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub documents: Vec<String>,
    pub pages: usize,
    pub chunks: usize,
    pub zero_vectors: usize,
    pub warnings: Vec<String>,
}

/// Layout files in `dir`, sorted by file name.
pub fn layout_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let io = |e: std::io::Error| PipelineError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_layouts(dir: &Path) -> Result<Vec<LayoutPayload>, PipelineError> {
    let files = layout_files(dir)?;
    if files.is_empty() {
        return Err(PipelineError::NoInputs(dir.display().to_string()));
    }
    let mut payloads: Vec<(String, LayoutPayload)> = Vec::new();
    for path in files {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::Io {
            path: shown.clone(),
            message: e.to_string(),
        })?;
        let payload = parse_layout(&text).map_err(|source| PipelineError::Layout {
            path: shown.clone(),
            source,
        })?;
        if let Some((first, _)) = payloads.iter().find(|(_, p)| p.document_id == payload.document_id) {
            return Err(PipelineError::DuplicateDocument {
                document_id: payload.document_id,
                first: first.clone(),
                second: shown,
            });
        }
        payloads.push((shown, payload));
    }
    Ok(payloads.into_iter().map(|(_, p)| p).collect())
}

/// Preprocesses, chunks and embeds every payload into `index`.
pub fn ingest_payloads(
    payloads: &[LayoutPayload],
    index: &VectorIndex,
    chart_provider: Option<&dyn ChartProvider>,
    embedder: &dyn Embedder,
    tokenizer: &dyn Tokenizer,
    options: IngestOptions,
) -> Result<IngestReport, PipelineError> {
    let mut report = IngestReport::default();
    let mut seen = BTreeSet::new();
    for payload in payloads {
        if !seen.insert(payload.document_id.clone()) {
            return Err(PipelineError::DuplicateDocument {
                document_id: payload.document_id.clone(),
                first: "input".into(),
                second: "input".into(),
            });
        }
        let pages = preprocess_document(
            payload,
            chart_provider,
            PreprocessOptions {
                table_format: options.table_format,
                max_in_flight: options.max_in_flight,
            },
        );
        for page in &pages {
            for warning in &page.warnings {
                report
                    .warnings
                    .push(format!("{} page {}: {warning}", page.document_id, page.page_number));
            }
        }
        let chunks = split_pages(&pages, options.chunk_size, tokenizer)?;
        report.pages += pages.len();
        report.chunks += chunks.len();
        for chunk in chunks {
            let vector = embed(&chunk.text, embedder)?;
            if index.upsert(IndexEntry { chunk, vector })?.zero_vector {
                report.zero_vectors += 1;
            }
        }
        report.documents.push(payload.document_id.clone());
    }
    Ok(report)
}

/// Builds a fresh index from every `*.json` layout file in `dir`.
pub fn ingest_dir(
    dir: &Path,
    chart_provider: Option<&dyn ChartProvider>,
    embedder: &dyn Embedder,
    tokenizer: &dyn Tokenizer,
    options: IngestOptions,
) -> Result<(VectorIndex, IngestReport), PipelineError> {
    let payloads = load_layouts(dir)?;
    let index = VectorIndex::new(embedder.dimension(), tokenizer.tag(), embedder.tag())?;
    let report = ingest_payloads(&payloads, &index, chart_provider, embedder, tokenizer, options)?;
    Ok((index, report))
}
