//! Retrieval-augmented question answering over multi-structured PDF documents.
//!
//! The pipeline turns a layout-analysis payload into per-page content
//! (narrative text, tables flattened to key/value records, chart data
//! recovered from figures), cuts each page into token-bounded chunks, embeds
//! and indexes them, and answers questions from the top-k retrieved chunks.
//! A pricing model compares per-page pre-processing costs across solutions.

pub mod chart;
pub mod chunk;
pub mod cost;
pub mod delimited;
pub mod embed;
pub mod eval;
pub mod generation;
pub mod index;
pub mod layout;
pub mod pipeline;
pub mod preprocess;
pub mod provider;
pub mod record;
pub mod region;
pub mod table;
pub mod tokenize;

use thiserror::Error;

pub use chunk::{DocumentChunk, DEFAULT_CHUNK_SIZE};
pub use embed::{EmbeddingVector, LocalHashEmbedder};
pub use index::{RetrievalConfig, VectorIndex};
pub use record::{FlatRecord, TableFormat};
pub use tokenize::DefaultTokenizer;

/// Any error the library can return, with a stable machine-readable kind.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Table(#[from] table::TableError),
    #[error(transparent)]
    Chart(#[from] chart::ChartError),
    #[error(transparent)]
    Record(#[from] record::RecordError),
    #[error(transparent)]
    Layout(#[from] layout::LayoutError),
    #[error(transparent)]
    Provider(#[from] provider::ProviderError),
    #[error(transparent)]
    Chunk(#[from] chunk::ChunkError),
    #[error(transparent)]
    Embed(#[from] embed::EmbedError),
    #[error(transparent)]
    Index(#[from] index::IndexError),
    #[error(transparent)]
    Generation(#[from] generation::GenerationError),
    #[error(transparent)]
    Cost(#[from] cost::CostError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Pipeline(#[from] pipeline::PipelineError),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Table(_) => "table",
            Error::Chart(_) => "chart",
            Error::Record(_) => "record",
            Error::Layout(_) => "layout",
            Error::Provider(_) => "provider",
            Error::Chunk(_) => "chunk",
            Error::Embed(_) => "embedding",
            Error::Index(_) => "index",
            Error::Generation(_) => "generation",
            Error::Cost(_) => "cost",
            Error::Eval(_) => "eval",
            Error::Pipeline(_) => "ingest",
        }
    }
}
