//! Extracted table grids and header flattening.
//!
//! A grid holds cells with spans and a role. Column-header cells occupy a
//! contiguous prefix of rows; every other row becomes one [`FlatRecord`]
//! whose keys are the column's header path joined with `;` (each segment is
//! followed by `;`, so two header levels give `"Fiscal Years;2013;"`).
//!
//! Flattening is lossy on purpose. A cell spanning several data rows only
//! supplies its text at its top-left coordinate; the other coordinates it
//! covers read as empty strings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::FlatRecord;
use crate::region::{BoundingRegion, RegionError};

pub const KEY_SEPARATOR: char = ';';

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("grid must have at least one row and one column ({rows}x{columns})")]
    EmptyGrid { rows: usize, columns: usize },
    #[error("cell {index} has a zero span")]
    ZeroSpan { index: usize },
    #[error("cell {index} at ({row}, {column}) with span {row_span}x{column_span} exceeds the {rows}x{columns} grid")]
    OutOfBounds {
        index: usize,
        row: usize,
        column: usize,
        row_span: usize,
        column_span: usize,
        rows: usize,
        columns: usize,
    },
    #[error("cells {first} and {second} overlap at ({row}, {column})")]
    Overlap {
        first: usize,
        second: usize,
        row: usize,
        column: usize,
    },
    #[error("column header rows are not a contiguous prefix: row {row} has no header cell but a later row does")]
    NonContiguousHeaders { row: usize },
    #[error("cell {index}: {source}")]
    Region { index: usize, source: RegionError },
    #[error("table region: {0}")]
    TableRegion(RegionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    #[serde(alias = "columnHeader", alias = "stubHead", alias = "stub_head")]
    ColumnHeader,
    #[serde(alias = "rowHeader")]
    RowHeader,
    #[default]
    Content,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableCell {
    #[serde(alias = "rowIndex")]
    pub row_index: usize,
    #[serde(alias = "columnIndex")]
    pub column_index: usize,
    #[serde(default = "one", alias = "rowSpan")]
    pub row_span: usize,
    #[serde(default = "one", alias = "columnSpan")]
    pub column_span: usize,
    #[serde(default)]
    pub kind: CellKind,
    #[serde(default)]
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<BoundingRegion>,
}

impl TableCell {
    pub fn new(row: usize, column: usize, kind: CellKind, content: impl Into<String>) -> Self {
        Self {
            row_index: row,
            column_index: column,
            row_span: 1,
            column_span: 1,
            kind,
            content: content.into(),
            region: None,
        }
    }

    pub fn header(row: usize, column: usize, content: impl Into<String>) -> Self {
        Self::new(row, column, CellKind::ColumnHeader, content)
    }

    pub fn content(row: usize, column: usize, content: impl Into<String>) -> Self {
        Self::new(row, column, CellKind::Content, content)
    }

    pub fn with_span(mut self, row_span: usize, column_span: usize) -> Self {
        self.row_span = row_span;
        self.column_span = column_span;
        self
    }
}

/// Raw serde shape; [`TableGrid`] is only reachable through validation.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    #[serde(alias = "rowCount")]
    row_count: usize,
    #[serde(alias = "columnCount")]
    column_count: usize,
    cells: Vec<TableCell>,
    #[serde(default)]
    caption: Option<String>,
    #[serde(default)]
    region: Option<BoundingRegion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct TableGrid {
    row_count: usize,
    column_count: usize,
    cells: Vec<TableCell>,
    #[serde(skip_serializing_if = "Option::is_none")]
    caption: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    region: Option<BoundingRegion>,
    #[serde(skip)]
    header_rows: usize,
    /// `occupancy[r * columns + c]` = index of the covering cell.
    #[serde(skip)]
    occupancy: Vec<Option<usize>>,
}

impl TryFrom<RawGrid> for TableGrid {
    type Error = TableError;

    fn try_from(raw: RawGrid) -> Result<Self, Self::Error> {
        let mut grid = TableGrid::new(raw.row_count, raw.column_count, raw.cells)?;
        grid.caption = raw.caption;
        if let Some(region) = raw.region {
            region.validate().map_err(TableError::TableRegion)?;
            grid.region = Some(region);
        }
        Ok(grid)
    }
}

impl TableGrid {
    pub fn new(row_count: usize, column_count: usize, cells: Vec<TableCell>) -> Result<Self, TableError> {
        if row_count == 0 || column_count == 0 {
            return Err(TableError::EmptyGrid {
                rows: row_count,
                columns: column_count,
            });
        }
        let mut occupancy = vec![None; row_count * column_count];
        for (index, cell) in cells.iter().enumerate() {
            if cell.row_span == 0 || cell.column_span == 0 {
                return Err(TableError::ZeroSpan { index });
            }
            if cell.row_index + cell.row_span > row_count
                || cell.column_index + cell.column_span > column_count
            {
                return Err(TableError::OutOfBounds {
                    index,
                    row: cell.row_index,
                    column: cell.column_index,
                    row_span: cell.row_span,
                    column_span: cell.column_span,
                    rows: row_count,
                    columns: column_count,
                });
            }
            if let Some(region) = &cell.region {
                region
                    .validate()
                    .map_err(|source| TableError::Region { index, source })?;
            }
            for r in cell.row_index..cell.row_index + cell.row_span {
                for c in cell.column_index..cell.column_index + cell.column_span {
                    let slot = &mut occupancy[r * column_count + c];
                    if let Some(first) = *slot {
                        return Err(TableError::Overlap {
                            first,
                            second: index,
                            row: r,
                            column: c,
                        });
                    }
                    *slot = Some(index);
                }
            }
        }

        let mut header_row = vec![false; row_count];
        for cell in cells.iter().filter(|c| c.kind == CellKind::ColumnHeader) {
            for flag in &mut header_row[cell.row_index..cell.row_index + cell.row_span] {
                *flag = true;
            }
        }
        let header_rows = header_row.iter().take_while(|&&h| h).count();
        if let Some(row) = header_row[header_rows..].iter().position(|&h| h) {
            debug_assert!(row > 0);
            return Err(TableError::NonContiguousHeaders { row: header_rows });
        }

        Ok(Self {
            row_count,
            column_count,
            cells,
            caption: None,
            region: None,
            header_rows,
            occupancy,
        })
    }

    pub fn with_caption(mut self, caption: impl Into<String>) -> Self {
        self.caption = Some(caption.into());
        self
    }

    pub fn with_region(mut self, region: BoundingRegion) -> Result<Self, TableError> {
        region.validate().map_err(TableError::TableRegion)?;
        self.region = Some(region);
        Ok(self)
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn column_count(&self) -> usize {
        self.column_count
    }

    pub fn cells(&self) -> &[TableCell] {
        &self.cells
    }

    pub fn caption(&self) -> Option<&str> {
        self.caption.as_deref()
    }

    pub fn region(&self) -> Option<&BoundingRegion> {
        self.region.as_ref()
    }

    /// Number of leading rows covered by column-header cells.
    pub fn header_row_count(&self) -> usize {
        self.header_rows
    }

    /// The cell whose span covers `(row, column)`, if any.
    pub fn cell_at(&self, row: usize, column: usize) -> Option<&TableCell> {
        if row >= self.row_count || column >= self.column_count {
            return None;
        }
        self.occupancy[row * self.column_count + column].map(|i| &self.cells[i])
    }

    fn cell_index_at(&self, row: usize, column: usize) -> Option<usize> {
        self.occupancy[row * self.column_count + column]
    }
}

/// One key per column, built from the header rows top to bottom.
///
/// A header cell spanning several rows contributes its text once. A header
/// row with nothing over the column contributes an empty segment. Grids
/// without header rows get `col_<index>`. Repeated keys get `#2`, `#3`, ...
/// in column order.
pub fn merge_column_headers(grid: &TableGrid) -> Vec<String> {
    let raw: Vec<String> = if grid.header_rows == 0 {
        (0..grid.column_count).map(|c| format!("col_{c}")).collect()
    } else {
        (0..grid.column_count)
            .map(|column| {
                let mut key = String::new();
                let mut previous = None;
                for row in 0..grid.header_rows {
                    match grid.cell_index_at(row, column) {
                        Some(index) if previous == Some(index) => {}
                        Some(index) => {
                            key.push_str(&grid.cells[index].content);
                            key.push(KEY_SEPARATOR);
                            previous = Some(index);
                        }
                        None => {
                            key.push(KEY_SEPARATOR);
                            previous = None;
                        }
                    }
                }
                key
            })
            .collect()
    };
    disambiguate(raw)
}

/// Appends `#2`, `#3`, ... to repeated keys, keeping the first as is.
pub(crate) fn disambiguate(keys: Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(keys.len());
    for key in keys {
        if !out.contains(&key) {
            out.push(key);
            continue;
        }
        let mut n = 2;
        loop {
            let candidate = format!("{key}#{n}");
            if !out.contains(&candidate) {
                out.push(candidate);
                break;
            }
            n += 1;
        }
    }
    out
}

/// One record per non-header row.
pub fn flatten_table(grid: &TableGrid) -> Vec<FlatRecord> {
    let keys = merge_column_headers(grid);
    (grid.header_rows..grid.row_count)
        .map(|row| {
            let mut values: Vec<String> = (0..grid.column_count)
                .map(|column| match grid.cell_at(row, column) {
                    Some(cell) if cell.row_index == row && cell.column_index == column => cell.content.clone(),
                    _ => String::new(),
                })
                .collect();

            // A lone row-header (group label) lands under the first key.
            let anchored: Vec<&TableCell> = grid
                .cells
                .iter()
                .filter(|c| c.row_index == row && !c.content.is_empty())
                .collect();
            if let [label] = anchored.as_slice() {
                if label.kind == CellKind::RowHeader && label.column_index != 0 && values[0].is_empty() {
                    values.swap(0, label.column_index);
                }
            }

            let mut record = FlatRecord::new();
            for (key, value) in keys.iter().zip(values) {
                record
                    .push(key.clone(), value)
                    .expect("merged keys are unique");
            }
            record
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn revenue_by_region() -> TableGrid {
        TableGrid::new(
            3,
            5,
            vec![
                TableCell::header(0, 0, "Revenues by region"),
                TableCell::header(0, 1, "Fiscal Years").with_span(1, 4),
                TableCell::header(1, 0, "(Dollars in millions)"),
                TableCell::header(1, 1, "2013"),
                TableCell::header(1, 2, "% Change"),
                TableCell::header(1, 3, "2012"),
                TableCell::header(1, 4, "2011"),
                TableCell::new(2, 0, CellKind::RowHeader, "North America"),
                TableCell::content(2, 1, "$ 159"),
                TableCell::content(2, 2, "(6%)"),
                TableCell::content(2, 3, "$ 130"),
                TableCell::content(2, 4, "$ 137"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn revenue_table_keys() {
        assert_eq!(
            merge_column_headers(&revenue_by_region()),
            vec![
                "Revenues by region;(Dollars in millions);",
                "Fiscal Years;2013;",
                "Fiscal Years;% Change;",
                "Fiscal Years;2012;",
                "Fiscal Years;2011;",
            ]
        );
    }

    #[test]
    fn revenue_table_first_record() {
        let records = flatten_table(&revenue_by_region());
        assert_eq!(records.len(), 1);
        let expected = [
            ("Revenues by region;(Dollars in millions);", "North America"),
            ("Fiscal Years;2013;", "$ 159"),
            ("Fiscal Years;% Change;", "(6%)"),
            ("Fiscal Years;2012;", "$ 130"),
            ("Fiscal Years;2011;", "$ 137"),
        ];
        let got: Vec<(&str, &str)> = records[0]
            .entries()
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn headerless_grid_uses_synthetic_keys() {
        let grid = TableGrid::new(1, 3, vec![TableCell::content(0, 0, "x")]).unwrap();
        assert_eq!(merge_column_headers(&grid), vec!["col_0", "col_1", "col_2"]);
        let one = TableGrid::new(1, 1, vec![TableCell::content(0, 0, "x")]).unwrap();
        let records = flatten_table(&one);
        assert_eq!(records, vec![FlatRecord::from_entries([("col_0", "x")]).unwrap()]);
    }

    #[test]
    fn single_header_row() {
        let grid = TableGrid::new(
            2,
            2,
            vec![
                TableCell::header(0, 0, "Quarter"),
                TableCell::header(0, 1, "APE Sales"),
                TableCell::content(1, 0, "2Q23"),
                TableCell::content(1, 1, "552"),
            ],
        )
        .unwrap();
        assert_eq!(merge_column_headers(&grid), vec!["Quarter;", "APE Sales;"]);
    }

    #[test]
    fn uncovered_header_coordinate_gives_empty_segment() {
        // Column 0 has no top-level header.
        let grid = TableGrid::new(
            3,
            2,
            vec![
                TableCell::header(0, 1, "Top"),
                TableCell::header(1, 0, "Name"),
                TableCell::header(1, 1, "Value"),
            ],
        )
        .unwrap();
        assert_eq!(merge_column_headers(&grid), vec![";Name;", "Top;Value;"]);
    }

    #[test]
    fn row_spanning_header_contributes_once() {
        let grid = TableGrid::new(
            3,
            2,
            vec![
                TableCell::header(0, 0, "Region").with_span(2, 1),
                TableCell::header(0, 1, "2023"),
                TableCell::header(1, 1, "Q1"),
            ],
        )
        .unwrap();
        assert_eq!(merge_column_headers(&grid), vec!["Region;", "2023;Q1;"]);
    }

    #[test]
    fn duplicate_keys_are_numbered() {
        let grid = TableGrid::new(
            1,
            4,
            vec![
                TableCell::header(0, 0, "A"),
                TableCell::header(0, 1, "A"),
                TableCell::header(0, 2, "B"),
                TableCell::header(0, 3, "A"),
            ],
        )
        .unwrap();
        assert_eq!(merge_column_headers(&grid), vec!["A;", "A;#2", "B;", "A;#3"]);
    }

    #[test]
    fn multi_row_row_header_leaves_empty_value() {
        let grid = TableGrid::new(
            4,
            3,
            vec![
                TableCell::header(0, 0, "Segment"),
                TableCell::header(0, 1, "Item"),
                TableCell::header(0, 2, "Value"),
                TableCell::new(1, 0, CellKind::RowHeader, "Asia").with_span(2, 1),
                TableCell::content(1, 1, "Sales"),
                TableCell::content(1, 2, "10"),
                TableCell::content(2, 1, "Costs"),
                TableCell::content(2, 2, "4"),
                TableCell::content(3, 0, "Total"),
                TableCell::content(3, 2, "6"),
            ],
        )
        .unwrap();
        let records = flatten_table(&grid);
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].get("Segment;"), Some("Asia"));
        assert_eq!(records[1].get("Segment;"), Some(""));
        assert_eq!(records[1].get("Item;"), Some("Costs"));
        assert_eq!(records[2].get("Item;"), Some(""));
    }

    #[test]
    fn group_label_row_moves_to_first_key() {
        let grid = TableGrid::new(
            2,
            3,
            vec![
                TableCell::header(0, 0, "a"),
                TableCell::header(0, 1, "b"),
                TableCell::header(0, 2, "c"),
                TableCell::new(1, 1, CellKind::RowHeader, "Group"),
            ],
        )
        .unwrap();
        let records = flatten_table(&grid);
        let values: Vec<&str> = records[0].values().collect();
        assert_eq!(values, vec!["Group", "", ""]);
    }

    #[test]
    fn column_spanning_data_cell_anchors_left() {
        let grid = TableGrid::new(
            2,
            3,
            vec![
                TableCell::header(0, 0, "a"),
                TableCell::header(0, 1, "b"),
                TableCell::header(0, 2, "c"),
                TableCell::content(1, 0, "wide").with_span(1, 2),
                TableCell::content(1, 2, "z"),
            ],
        )
        .unwrap();
        let values: Vec<String> = flatten_table(&grid)[0].values().map(str::to_string).collect();
        assert_eq!(values, vec!["wide", "", "z"]);
    }

    #[test]
    fn whitespace_preserved() {
        let grid = TableGrid::new(
            2,
            1,
            vec![TableCell::header(0, 0, " Year "), TableCell::content(1, 0, "  7 ")],
        )
        .unwrap();
        assert_eq!(flatten_table(&grid)[0].entries()[0], (" Year ;".into(), "  7 ".into()));
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(matches!(TableGrid::new(0, 1, vec![]), Err(TableError::EmptyGrid { .. })));
        assert!(matches!(
            TableGrid::new(1, 1, vec![TableCell::content(0, 0, "x").with_span(0, 1)]),
            Err(TableError::ZeroSpan { index: 0 })
        ));
        assert!(matches!(
            TableGrid::new(2, 2, vec![TableCell::content(1, 1, "x").with_span(1, 2)]),
            Err(TableError::OutOfBounds { index: 0, .. })
        ));
        assert_eq!(
            TableGrid::new(
                2,
                2,
                vec![
                    TableCell::content(0, 0, "x").with_span(2, 2),
                    TableCell::content(1, 1, "y")
                ]
            ),
            Err(TableError::Overlap {
                first: 0,
                second: 1,
                row: 1,
                column: 1
            })
        );
        assert_eq!(
            TableGrid::new(
                3,
                1,
                vec![TableCell::header(0, 0, "h"), TableCell::header(2, 0, "late")]
            ),
            Err(TableError::NonContiguousHeaders { row: 1 })
        );
        assert!(matches!(
            TableGrid::new(2, 1, vec![TableCell::header(1, 0, "h")]),
            Err(TableError::NonContiguousHeaders { row: 0 })
        ));
    }

    #[test]
    fn grid_json_round_trip_and_validation() {
        let grid = revenue_by_region().with_caption("Revenues");
        let text = serde_json::to_string(&grid).unwrap();
        let back: TableGrid = serde_json::from_str(&text).unwrap();
        assert_eq!(back, grid);
        assert_eq!(back.header_row_count(), 2);

        let bad = r#"{"row_count": 1, "column_count": 1, "cells": [{"row_index": 0, "column_index": 1}]}"#;
        assert!(serde_json::from_str::<TableGrid>(bad).is_err());
    }

    #[test]
    fn vendor_style_field_names_accepted() {
        let text = r#"{"rowCount": 2, "columnCount": 1, "cells": [
            {"rowIndex": 0, "columnIndex": 0, "kind": "columnHeader", "content": "Year"},
            {"rowIndex": 1, "columnIndex": 0, "content": "2023"}]}"#;
        let grid: TableGrid = serde_json::from_str(text).unwrap();
        assert_eq!(merge_column_headers(&grid), vec!["Year;"]);
    }
}
