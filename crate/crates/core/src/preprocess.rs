//! Per-page text assembly from a validated layout payload.
//!
//! Narrative text keeps paragraphs and section titles in reading order;
//! page headers, footers and image captions are dropped. Each table is
//! flattened and serialized in the requested [`TableFormat`]. Each figure is
//! offered to the chart provider; charts it can read become JSON records,
//! and any failure there leaves the figure in the manifest only.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::chart::csv_to_records;
use crate::layout::{DocumentMetadata, LayoutPage, LayoutPayload, TextRole};
use crate::provider::{HttpEndpoint, ProviderError};
use crate::record::{parse_records, serialize_json, serialize_records, FlatRecord, RecordError, TableFormat};
use crate::region::BoundingRegion;
use crate::table::flatten_table;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageContent {
    pub document_id: String,
    pub page_number: u32,
    #[serde(default, skip_serializing_if = "DocumentMetadata::is_empty")]
    pub metadata: DocumentMetadata,
    pub narrative_text: String,
    pub table_format: TableFormat,
    pub table_texts: Vec<String>,
    pub chart_texts: Vec<String>,
    pub figure_manifest: Vec<BoundingRegion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section_title: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PageContent {
    pub fn table_records(&self) -> Result<Vec<Vec<FlatRecord>>, RecordError> {
        self.table_texts
            .iter()
            .map(|t| parse_records(t, self.table_format))
            .collect()
    }

    pub fn chart_records(&self) -> Result<Vec<Vec<FlatRecord>>, RecordError> {
        self.chart_texts
            .iter()
            .map(|t| parse_records(t, TableFormat::Json))
            .collect()
    }
}

/// Identifies one figure for the chart provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRef {
    pub document_id: String,
    pub page_number: u32,
    pub figure_index: usize,
    pub polygon: Vec<[f64; 2]>,
}

/// One line of the figure manifest consumed by the external cropping tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureManifestEntry {
    pub document_id: String,
    pub page_number: u32,
    pub figure_index: usize,
    pub polygon: Vec<[f64; 2]>,
    pub suggested_crop_path: String,
}

fn path_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

pub fn crop_path(document_id: &str, page_number: u32, figure_index: usize) -> String {
    format!(
        "figures/{}/page-{page_number:04}-figure-{figure_index:02}.png",
        path_safe(document_id)
    )
}

/// Figures in (page, region) order.
pub fn extract_figures(payload: &LayoutPayload) -> Vec<FigureManifestEntry> {
    payload
        .pages
        .iter()
        .flat_map(|page| {
            page.figures.iter().enumerate().map(|(i, region)| FigureManifestEntry {
                document_id: payload.document_id.clone(),
                page_number: page.page_number,
                figure_index: i,
                polygon: region.polygon.clone(),
                suggested_crop_path: crop_path(&payload.document_id, page.page_number, i),
            })
        })
        .collect()
}

pub fn manifest_to_jsonl(entries: &[FigureManifestEntry]) -> String {
    entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("manifest entries serialize") + "\n")
        .collect()
}

/// Chart-to-table conversion for one figure. `Ok(None)` means the figure is
/// not a chart the provider can read.
pub trait ChartProvider: Send + Sync {
    fn chart_csv(&self, figure: &FigureRef) -> Result<Option<String>, ProviderError>;
}

/// `<root>/<document_id>/p<page>-f<index>.csv`; a missing file means "no chart".
#[derive(Debug, Clone)]
pub struct FixtureChartProvider {
    root: PathBuf,
}

impl FixtureChartProvider {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path_for(&self, document_id: &str, page_number: u32, figure_index: usize) -> PathBuf {
        self.root
            .join(path_safe(document_id))
            .join(format!("p{page_number}-f{figure_index}.csv"))
    }
}

impl ChartProvider for FixtureChartProvider {
    fn chart_csv(&self, figure: &FigureRef) -> Result<Option<String>, ProviderError> {
        let path = self.path_for(&figure.document_id, figure.page_number, figure.figure_index);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(ProviderError::Permanent(format!("{}: {e}", path.display()))),
        }
    }
}

/// POSTs the [`FigureRef`] as JSON; a 2xx body is CSV, 204 means no chart.
#[derive(Debug, Clone)]
pub struct HttpChartProvider {
    endpoint: HttpEndpoint,
}

impl HttpChartProvider {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        Self { endpoint }
    }
}

impl ChartProvider for HttpChartProvider {
    fn chart_csv(&self, figure: &FigureRef) -> Result<Option<String>, ProviderError> {
        let (status, body) = self.endpoint.post_json(figure)?;
        Ok((status != 204 && !body.trim().is_empty()).then_some(body))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PreprocessOptions {
    pub table_format: TableFormat,
    /// Pages processed at once; also bounds concurrent chart-provider calls.
    pub max_in_flight: usize,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            table_format: TableFormat::Json,
            max_in_flight: 4,
        }
    }
}

pub fn preprocess_document(
    payload: &LayoutPayload,
    chart_provider: Option<&dyn ChartProvider>,
    options: PreprocessOptions,
) -> Vec<PageContent> {
    // Section titles carry across pages, so resolve them up front.
    let mut current_title: Option<String> = None;
    let titles: Vec<Option<String>> = payload
        .pages
        .iter()
        .map(|page| {
            if let Some(block) = page
                .text_blocks
                .iter()
                .rev()
                .find(|b| b.role == TextRole::SectionTitle)
            {
                current_title = Some(block.content.clone());
            }
            current_title.clone()
        })
        .collect();

    let workers = options.max_in_flight.clamp(1, payload.pages.len().max(1));
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<PageContent>> = vec![None; payload.pages.len()];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(page) = payload.pages.get(i) else { break };
                        done.push((
                            i,
                            process_page(payload, page, titles[i].clone(), chart_provider, options.table_format),
                        ));
                    }
                    done
                })
            })
            .collect();
        for handle in handles {
            for (i, content) in handle.join().expect("page worker panicked") {
                slots[i] = Some(content);
            }
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every page processed"))
        .collect()
}

fn process_page(
    payload: &LayoutPayload,
    page: &LayoutPage,
    section_title: Option<String>,
    chart_provider: Option<&dyn ChartProvider>,
    table_format: TableFormat,
) -> PageContent {
    let narrative_text = page
        .text_blocks
        .iter()
        .filter(|b| matches!(b.role, TextRole::Paragraph | TextRole::SectionTitle))
        .map(|b| b.content.as_str())
        .collect::<Vec<_>>()
        .join("\n");

    let table_texts = page
        .tables
        .iter()
        .map(|grid| serialize_records(&flatten_table(grid), table_format))
        .collect();

    let mut warnings = Vec::new();
    let mut chart_texts = Vec::new();
    if let Some(provider) = chart_provider {
        for (i, region) in page.figures.iter().enumerate() {
            let figure = FigureRef {
                document_id: payload.document_id.clone(),
                page_number: page.page_number,
                figure_index: i,
                polygon: region.polygon.clone(),
            };
            match provider.chart_csv(&figure) {
                Ok(None) => {}
                Ok(Some(csv)) => match csv_to_records(&csv) {
                    Ok(records) => chart_texts.push(serialize_json(&records)),
                    Err(e) => warnings.push(format!("figure {i}: chart CSV rejected: {e}")),
                },
                Err(e) => warnings.push(format!("figure {i}: chart provider failed: {e}")),
            }
        }
    }
    for w in &warnings {
        log::warn!("{} page {}: {w}", payload.document_id, page.page_number);
    }

    PageContent {
        document_id: payload.document_id.clone(),
        page_number: page.page_number,
        metadata: payload.metadata.clone(),
        narrative_text,
        table_format,
        table_texts,
        chart_texts,
        figure_manifest: page.figures.clone(),
        section_title,
        warnings,
    }
}
