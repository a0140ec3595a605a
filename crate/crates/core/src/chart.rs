//! Chart-to-table output (CSV) into flat records.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delimited::{self, CsvError};
use crate::record::FlatRecord;
use crate::region::BoundingRegion;
use crate::table::disambiguate;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChartError {
    #[error("malformed chart CSV at row {row}, column {column}: {message}")]
    Malformed {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("chart CSV has no header row")]
    MissingHeader,
    #[error("chart CSV has a header but no data rows")]
    NoDataRows,
}

impl From<CsvError> for ChartError {
    fn from(err: CsvError) -> Self {
        let (row, column) = err.position();
        ChartError::Malformed {
            row,
            column,
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartExtraction {
    pub source_region: BoundingRegion,
    pub csv_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart_kind_hint: Option<String>,
}

/// One record per CSV data row, keyed by the (single-level) header names.
///
/// Fields are trimmed of surrounding spaces. Rows shorter than the header
/// are padded with empty values; rows longer than it are rejected.
pub fn chart_csv_to_records(extraction: &ChartExtraction) -> Result<Vec<FlatRecord>, ChartError> {
    csv_to_records(&extraction.csv_text)
}

pub fn csv_to_records(csv_text: &str) -> Result<Vec<FlatRecord>, ChartError> {
    let mut rows = delimited::read_rows(csv_text, true)?.into_iter();
    let header = rows.next().ok_or(ChartError::MissingHeader)?;
    let keys = disambiguate(
        header
            .into_iter()
            .enumerate()
            .map(|(i, h)| if h.is_empty() { format!("col_{i}") } else { h })
            .collect(),
    );

    let mut records = Vec::new();
    for (i, mut row) in rows.enumerate() {
        let row_no = i + 2;
        if row.len() > keys.len() {
            return Err(ChartError::Malformed {
                row: row_no,
                column: keys.len() + 1,
                message: format!("{} fields but the header has {}", row.len(), keys.len()),
            });
        }
        if row.len() < keys.len() {
            log::warn!(
                "chart CSV row {row_no} has {} of {} fields; padding with empty values",
                row.len(),
                keys.len()
            );
            row.resize(keys.len(), String::new());
        }
        records.push(
            FlatRecord::from_entries(keys.iter().cloned().zip(row)).expect("keys disambiguated"),
        );
    }
    if records.is_empty() {
        return Err(ChartError::NoDataRows);
    }
    Ok(records)
}
