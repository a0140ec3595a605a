//! Flat key/value records and their two text serializations.
//!
//! JSON output uses `", "` and `": "` separators so serialized tables read
//! like `{"Fiscal Years;2013;": "$ 159", ...}`. The dataframe form is CSV
//! with one header line of keys.

use std::fmt;
use std::io;
use std::str::FromStr;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::delimited::{self, CsvError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecordError {
    #[error("duplicate key {0:?} in record")]
    DuplicateKey(String),
    #[error("invalid JSON records: {0}")]
    Json(String),
    #[error("invalid dataframe text: {0}")]
    Csv(#[from] CsvError),
    #[error("dataframe row {row} has {found} fields, header has {expected}")]
    Arity {
        row: usize,
        expected: usize,
        found: usize,
    },
}

/// Ordered key/value pairs for one table or chart row. Keys are unique.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlatRecord {
    entries: Vec<(String, String)>,
}

impl FlatRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries<K, V, I>(entries: I) -> Result<Self, RecordError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut record = Self::new();
        for (k, v) in entries {
            record.push(k, v)?;
        }
        Ok(record)
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) -> Result<(), RecordError> {
        let key = key.into();
        if self.get(&key).is_some() {
            return Err(RecordError::DuplicateKey(key));
        }
        self.entries.push((key, value.into()));
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn values(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(_, v)| v.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Serialize for FlatRecord {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.entries.len()))?;
        for (k, v) in &self.entries {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for FlatRecord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct RecordVisitor;

        impl<'de> Visitor<'de> for RecordVisitor {
            type Value = FlatRecord;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object of string values")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<FlatRecord, A::Error> {
                let mut record = FlatRecord::new();
                while let Some((k, v)) = access.next_entry::<String, String>()? {
                    record.push(k, v).map_err(serde::de::Error::custom)?;
                }
                Ok(record)
            }
        }

        deserializer.deserialize_map(RecordVisitor)
    }
}

/// Context representation used for serialized tables.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Json,
    Dataframe,
}

impl TableFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            TableFormat::Json => "json",
            TableFormat::Dataframe => "dataframe",
        }
    }
}

impl fmt::Display for TableFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(TableFormat::Json),
            "dataframe" => Ok(TableFormat::Dataframe),
            other => Err(format!("unknown table format {other:?} (expected json or dataframe)")),
        }
    }
}

/// `serde_json` formatter producing `, ` and `: ` separators on one line.
struct SpacedFormatter;

impl serde_json::ser::Formatter for SpacedFormatter {
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        writer.write_all(b": ")
    }
}

pub fn serialize_json(records: &[FlatRecord]) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SpacedFormatter);
    records
        .serialize(&mut ser)
        .expect("serializing string maps cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn parse_json(text: &str) -> Result<Vec<FlatRecord>, RecordError> {
    serde_json::from_str(text).map_err(|e| RecordError::Json(e.to_string()))
}

/// Key list shared by all records: union of keys in first-seen order.
pub fn union_keys(records: &[FlatRecord]) -> Vec<String> {
    let mut keys: Vec<String> = Vec::new();
    for record in records {
        for key in record.keys() {
            if !keys.iter().any(|k| k == key) {
                keys.push(key.to_string());
            }
        }
    }
    keys
}

/// CSV text with a header line of keys. Records missing a key are padded
/// with empty values.
pub fn serialize_dataframe(records: &[FlatRecord]) -> String {
    let mut out = String::new();
    if records.is_empty() {
        return out;
    }
    let keys = union_keys(records);
    delimited::write_row(&mut out, keys.iter().map(String::as_str));
    for record in records {
        delimited::write_row(&mut out, keys.iter().map(|k| record.get(k).unwrap_or("")));
    }
    out
}

pub fn parse_dataframe(text: &str) -> Result<Vec<FlatRecord>, RecordError> {
    let mut rows = delimited::read_rows(text, false)?.into_iter();
    let Some(header) = rows.next() else {
        return Ok(Vec::new());
    };
    rows.enumerate()
        .map(|(i, row)| {
            if row.len() != header.len() {
                return Err(RecordError::Arity {
                    row: i + 2,
                    expected: header.len(),
                    found: row.len(),
                });
            }
            FlatRecord::from_entries(header.iter().cloned().zip(row))
        })
        .collect()
}

pub fn serialize_records(records: &[FlatRecord], format: TableFormat) -> String {
    match format {
        TableFormat::Json => serialize_json(records),
        TableFormat::Dataframe => serialize_dataframe(records),
    }
}

pub fn parse_records(text: &str, format: TableFormat) -> Result<Vec<FlatRecord>, RecordError> {
    match format {
        TableFormat::Json => parse_json(text),
        TableFormat::Dataframe => parse_dataframe(text),
    }
}
