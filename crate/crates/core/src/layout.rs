//! Layout-analysis payloads: what the OCR/layout provider returns per
//! document, validated before anything downstream sees it.
//!
//! The wire format is documented in `docs/layout-payload.schema.json`.
//! Vendor-style camelCase names (`pageNumber`, `rowSpan`, `columnHeader`, ...)
//! are accepted as aliases; unknown fields are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::{HttpEndpoint, ProviderError};
use crate::region::BoundingRegion;
use crate::table::TableGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("layout payload does not match the schema at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("layout payload invalid at {path}: {message}")]
    Invariant { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextRole {
    Paragraph,
    #[serde(alias = "sectionHeading", alias = "title")]
    SectionTitle,
    #[serde(alias = "imageCaption", alias = "caption")]
    ImageCaption,
    #[serde(alias = "pageFooter")]
    PageFooter,
    #[serde(alias = "pageHeader")]
    PageHeader,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextBlock {
    pub role: TextRole,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<BoundingRegion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutPage {
    #[serde(alias = "pageNumber")]
    pub page_number: u32,
    #[serde(default, alias = "textBlocks")]
    pub text_blocks: Vec<TextBlock>,
    #[serde(default)]
    pub tables: Vec<TableGrid>,
    #[serde(default)]
    pub figures: Vec<BoundingRegion>,
}

/// Document-level details carried into every chunk's metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub company: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quarter: Option<String>,
}

impl DocumentMetadata {
    pub fn is_empty(&self) -> bool {
        self.company.is_none() && self.year.is_none() && self.quarter.is_none()
    }
}

/// `Q1`..`Q4`.
pub fn is_valid_quarter(quarter: &str) -> bool {
    matches!(quarter.as_bytes(), [b'Q', b'1'..=b'4'])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutPayload {
    #[serde(alias = "documentId")]
    pub document_id: String,
    #[serde(default, skip_serializing_if = "DocumentMetadata::is_empty")]
    pub metadata: DocumentMetadata,
    #[serde(default)]
    pub pages: Vec<LayoutPage>,
}

impl LayoutPayload {
    pub fn validate(&self) -> Result<(), LayoutError> {
        let invariant = |path: String, message: String| LayoutError::Invariant { path, message };
        if self.document_id.trim().is_empty() {
            return Err(invariant("document_id".into(), "must not be empty".into()));
        }
        if let Some(q) = &self.metadata.quarter {
            if !is_valid_quarter(q) {
                return Err(invariant(
                    "metadata.quarter".into(),
                    format!("{q:?} does not match Q1..Q4"),
                ));
            }
        }
        let mut previous = 0u32;
        for (p, page) in self.pages.iter().enumerate() {
            if page.page_number <= previous {
                return Err(invariant(
                    format!("pages[{p}].page_number"),
                    format!(
                        "page numbers must increase strictly from 1; got {} after {}",
                        page.page_number, previous
                    ),
                ));
            }
            previous = page.page_number;

            let check = |path: String, region: &BoundingRegion| -> Result<(), LayoutError> {
                region
                    .validate()
                    .map_err(|e| invariant(path.clone(), e.to_string()))?;
                if region.page_number != page.page_number {
                    return Err(invariant(
                        path,
                        format!(
                            "region is on page {} but belongs to page {}",
                            region.page_number, page.page_number
                        ),
                    ));
                }
                Ok(())
            };
            for (b, block) in page.text_blocks.iter().enumerate() {
                if let Some(region) = &block.region {
                    check(format!("pages[{p}].text_blocks[{b}].region"), region)?;
                }
            }
            for (t, table) in page.tables.iter().enumerate() {
                if let Some(region) = table.region() {
                    check(format!("pages[{p}].tables[{t}].region"), region)?;
                }
                for (c, cell) in table.cells().iter().enumerate() {
                    if let Some(region) = &cell.region {
                        check(format!("pages[{p}].tables[{t}].cells[{c}].region"), region)?;
                    }
                }
            }
            for (f, figure) in page.figures.iter().enumerate() {
                check(format!("pages[{p}].figures[{f}]"), figure)?;
            }
        }
        Ok(())
    }
}

/// Parses and validates a payload. Nothing is coerced: the first schema or
/// invariant violation is reported with its path.
pub fn parse_layout(text: &str) -> Result<LayoutPayload, LayoutError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let payload: LayoutPayload = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        LayoutError::Schema {
            path: if path == "." { "$".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })?;
    de.end().map_err(|e| LayoutError::Schema {
        path: "$".into(),
        message: e.to_string(),
    })?;
    payload.validate()?;
    Ok(payload)
}

/// Source of raw layout JSON for a document locator.
pub trait LayoutProvider: Send + Sync {
    fn fetch(&self, locator: &str) -> Result<String, ProviderError>;
}

/// Reads payloads from disk. A locator is a path (absolute, or relative to
/// the root) or a bare document id resolved as `<root>/<id>.json`.
#[derive(Debug, Clone)]
pub struct FixtureLayoutProvider {
    root: PathBuf,
}

impl FixtureLayoutProvider {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn resolve(&self, locator: &str) -> PathBuf {
        let direct = Path::new(locator);
        if direct.is_absolute() {
            return direct.to_path_buf();
        }
        let joined = self.root.join(locator);
        if joined.is_file() {
            joined
        } else {
            self.root.join(format!("{locator}.json"))
        }
    }
}

impl LayoutProvider for FixtureLayoutProvider {
    fn fetch(&self, locator: &str) -> Result<String, ProviderError> {
        let path = self.resolve(locator);
        std::fs::read_to_string(&path)
            .map_err(|e| ProviderError::Unreachable(format!("{}: {e}", path.display())))
    }
}

/// POSTs `{"document": <locator>}` and expects the payload JSON back.
#[derive(Debug, Clone)]
pub struct HttpLayoutProvider {
    endpoint: HttpEndpoint,
}

impl HttpLayoutProvider {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        Self { endpoint }
    }
}

impl LayoutProvider for HttpLayoutProvider {
    fn fetch(&self, locator: &str) -> Result<String, ProviderError> {
        let (_, body) = self
            .endpoint
            .post_json(&serde_json::json!({ "document": locator }))?;
        Ok(body)
    }
}

pub fn extract_layout(locator: &str, provider: &dyn LayoutProvider) -> Result<LayoutPayload, LayoutError> {
    let raw = provider.fetch(locator)?;
    parse_layout(&raw)
}
