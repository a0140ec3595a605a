//! Page-scoped chunking.
//!
//! A page's text is its narrative followed by each serialized table and
//! chart, separated by blank lines. That text is cut greedily at token
//! starts into pieces of at most `chunk_size` tokens with no overlap, so the
//! chunks of a page concatenate back to the page text byte for byte. A
//! table or chart that fits in one chunk is never split: if it would
//! straddle a cut, the cut moves to its first token.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::is_valid_quarter;
use crate::preprocess::PageContent;
use crate::region::BoundingRegion;
use crate::tokenize::Tokenizer;

pub const DEFAULT_CHUNK_SIZE: usize = 600;
const SEGMENT_SEPARATOR: &str = "\n\n";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChunkError {
    #[error("chunk_size must be at least 1")]
    ZeroChunkSize,
    #[error("page_number must be >= 1 (document {0})")]
    ZeroPage(String),
    #[error("quarter {0:?} does not match Q1..Q4")]
    BadQuarter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkMetadata {
    pub document_id: String,
    pub page_number: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub company: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quarter: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section_title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<BoundingRegion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub chunk_id: String,
    pub text: String,
    pub token_count: usize,
    pub metadata: ChunkMetadata,
}

pub fn chunk_id(document_id: &str, page_number: u32, ordinal: usize) -> String {
    format!("{document_id}:p{page_number:04}:c{ordinal:04}")
}

struct Segment {
    range: std::ops::Range<usize>,
    keep_whole: bool,
}

/// The page text that gets chunked, with the byte range of each part.
fn page_segments(page: &PageContent) -> (String, Vec<Segment>) {
    let parts = std::iter::once((page.narrative_text.as_str(), false))
        .chain(page.table_texts.iter().map(|t| (t.as_str(), true)))
        .chain(page.chart_texts.iter().map(|t| (t.as_str(), true)))
        .filter(|(t, _)| !t.is_empty());
    let mut text = String::new();
    let mut segments = Vec::new();
    for (part, keep_whole) in parts {
        if !text.is_empty() {
            text.push_str(SEGMENT_SEPARATOR);
        }
        let start = text.len();
        text.push_str(part);
        segments.push(Segment {
            range: start..text.len(),
            keep_whole,
        });
    }
    (text, segments)
}

/// Narrative, tables and charts joined by blank lines.
pub fn page_text(page: &PageContent) -> String {
    page_segments(page).0
}

/// Byte offsets where chunks start.
fn cut_points(text: &str, segments: &[Segment], chunk_size: usize, tokenizer: &dyn Tokenizer) -> Vec<usize> {
    let spans = tokenizer.token_spans(text);
    if spans.is_empty() {
        return Vec::new();
    }
    let mut cuts = vec![0];
    let mut in_chunk = 0usize;
    let mut i = 0usize;
    let mut seg = 0usize;
    while i < spans.len() {
        let start = spans[i].start;
        while seg < segments.len() && segments[seg].range.end <= start {
            seg += 1;
        }
        let segment = segments.get(seg).filter(|s| s.range.contains(&start));
        if let Some(s) = segment.filter(|s| s.keep_whole) {
            let first_of_segment = i == 0 || spans[i - 1].start < s.range.start;
            if first_of_segment {
                let n = spans[i..].iter().take_while(|r| r.start < s.range.end).count();
                if n <= chunk_size {
                    if in_chunk > 0 && in_chunk + n > chunk_size {
                        cuts.push(start);
                        in_chunk = 0;
                    }
                    in_chunk += n;
                    i += n;
                    continue;
                }
            }
        }
        if in_chunk == chunk_size {
            cuts.push(start);
            in_chunk = 0;
        }
        in_chunk += 1;
        i += 1;
    }
    cuts
}

pub fn split_page(
    page: &PageContent,
    chunk_size: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<DocumentChunk>, ChunkError> {
    if chunk_size == 0 {
        return Err(ChunkError::ZeroChunkSize);
    }
    if page.page_number == 0 {
        return Err(ChunkError::ZeroPage(page.document_id.clone()));
    }
    if let Some(q) = &page.metadata.quarter {
        if !is_valid_quarter(q) {
            return Err(ChunkError::BadQuarter(q.clone()));
        }
    }
    let (text, segments) = page_segments(page);
    let cuts = cut_points(&text, &segments, chunk_size, tokenizer);
    let metadata = ChunkMetadata {
        document_id: page.document_id.clone(),
        page_number: page.page_number,
        company: page.metadata.company.clone(),
        year: page.metadata.year,
        quarter: page.metadata.quarter.clone(),
        section_title: page.section_title.clone(),
        region: None,
    };
    let chunks = cuts
        .iter()
        .enumerate()
        .map(|(ordinal, &start)| {
            let end = cuts.get(ordinal + 1).copied().unwrap_or(text.len());
            let piece = &text[start..end];
            let token_count = tokenizer.count_tokens(piece);
            if token_count > chunk_size {
                log::warn!(
                    "{} page {} chunk {ordinal}: {token_count} tokens exceeds chunk size {chunk_size}",
                    page.document_id,
                    page.page_number
                );
            }
            DocumentChunk {
                chunk_id: chunk_id(&page.document_id, page.page_number, ordinal),
                text: piece.to_string(),
                token_count,
                metadata: metadata.clone(),
            }
        })
        .collect();
    Ok(chunks)
}

/// Chunks every page; output is in page order, then ordinal order.
pub fn split_pages(
    pages: &[PageContent],
    chunk_size: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<DocumentChunk>, ChunkError> {
    let mut out = Vec::new();
    for page in pages {
        out.extend(split_page(page, chunk_size, tokenizer)?);
    }
    Ok(out)
}

pub fn chunks_to_jsonl(chunks: &[DocumentChunk]) -> String {
    chunks
        .iter()
        .map(|c| serde_json::to_string(c).expect("chunks serialize") + "\n")
        .collect()
}

pub fn chunks_from_jsonl(text: &str) -> Result<Vec<DocumentChunk>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::DocumentMetadata;
    use crate::record::TableFormat;
    use crate::tokenize::DefaultTokenizer;

    pub(crate) fn page_with(narrative: &str, tables: &[&str]) -> PageContent {
        PageContent {
            document_id: "doc".into(),
            page_number: 1,
            metadata: DocumentMetadata::default(),
            narrative_text: narrative.into(),
            table_format: TableFormat::Json,
            table_texts: tables.iter().map(|t| t.to_string()).collect(),
            chart_texts: vec![],
            figure_manifest: vec![],
            section_title: None,
            warnings: vec![],
        }
    }

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    fn sizes(chunks: &[DocumentChunk]) -> Vec<usize> {
        chunks.iter().map(|c| c.token_count).collect()
    }

    #[test]
    fn under_chunk_size_is_one_chunk() {
        let chunks = split_page(&page_with(&words(599), &[]), 600, &DefaultTokenizer).unwrap();
        assert_eq!(sizes(&chunks), vec![599]);
    }

    #[test]
    fn empty_page_has_no_chunks() {
        assert!(split_page(&page_with("", &[]), 600, &DefaultTokenizer).unwrap().is_empty());
    }

    #[test]
    fn greedy_split() {
        let chunks = split_page(&page_with(&words(1500), &[]), 600, &DefaultTokenizer).unwrap();
        assert_eq!(sizes(&chunks), vec![600, 600, 300]);
        let joined: String = chunks.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(joined, words(1500));
        assert_eq!(chunks[2].chunk_id, "doc:p0001:c0002");
    }

    #[test]
    fn table_kept_whole_when_it_fits() {
        // 8 narrative tokens, then a 5-token table, chunk size 10.
        let table = "t1 t2 t3 t4 t5";
        let page = page_with(&words(8), &[table]);
        let chunks = split_page(&page, 10, &DefaultTokenizer).unwrap();
        assert_eq!(sizes(&chunks), vec![8, 5]);
        assert_eq!(chunks[1].text, table);
        assert!(chunks[0].text.ends_with("\n\n"));
    }

    #[test]
    fn oversized_table_splits_greedily() {
        let table = words(25);
        let page = page_with("a b", &[&table]);
        let chunks = split_page(&page, 10, &DefaultTokenizer).unwrap();
        assert_eq!(sizes(&chunks), vec![10, 10, 7]);
    }

    #[test]
    fn zero_chunk_size_rejected() {
        assert_eq!(
            split_page(&page_with("a", &[]), 0, &DefaultTokenizer),
            Err(ChunkError::ZeroChunkSize)
        );
    }

    #[test]
    fn metadata_propagates() {
        let mut page = page_with("hello world", &[]);
        page.page_number = 7;
        page.section_title = Some("Outlook".into());
        page.metadata = DocumentMetadata {
            company: Some("MFC".into()),
            year: Some(2023),
            quarter: Some("Q1".into()),
        };
        let chunk = &split_page(&page, 600, &DefaultTokenizer).unwrap()[0];
        assert_eq!(chunk.metadata.page_number, 7);
        assert_eq!(chunk.metadata.company.as_deref(), Some("MFC"));
        assert_eq!(chunk.metadata.quarter.as_deref(), Some("Q1"));
        assert_eq!(chunk.metadata.section_title.as_deref(), Some("Outlook"));

        page.metadata.quarter = Some("Q9".into());
        assert!(matches!(split_page(&page, 600, &DefaultTokenizer), Err(ChunkError::BadQuarter(_))));
    }

    #[test]
    fn chunks_never_cross_pages() {
        let mut p2 = page_with(&words(5), &[]);
        p2.page_number = 2;
        let chunks = split_pages(&[page_with(&words(5), &[]), p2], 600, &DefaultTokenizer).unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[1].metadata.page_number, 2);
    }

    #[test]
    fn jsonl_round_trip() {
        let chunks = split_page(&page_with(&words(30), &["[]"]), 7, &DefaultTokenizer).unwrap();
        let text = chunks_to_jsonl(&chunks);
        assert_eq!(text.lines().count(), chunks.len());
        assert_eq!(chunks_from_jsonl(&text).unwrap(), chunks);
    }
}
