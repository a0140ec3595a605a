//! Strict RFC 4180 reader and writer.
//!
//! The reader reports the 1-based row and column of the first malformed
//! field. Leading and trailing spaces around a field are trimmed when
//! `trim` is set, which is how chart-to-table output separates fields
//! (`Quarter, APE Sales: Japan`).

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CsvError {
    #[error("row {row}, column {column}: unterminated quoted field")]
    UnterminatedQuote { row: usize, column: usize },
    #[error("row {row}, column {column}: unexpected character {found:?} after closing quote")]
    TrailingAfterQuote {
        row: usize,
        column: usize,
        found: char,
    },
    #[error("row {row}, column {column}: bare quote inside unquoted field")]
    BareQuote { row: usize, column: usize },
}

impl CsvError {
    pub fn position(&self) -> (usize, usize) {
        match *self {
            CsvError::UnterminatedQuote { row, column }
            | CsvError::TrailingAfterQuote { row, column, .. }
            | CsvError::BareQuote { row, column } => (row, column),
        }
    }
}

/// Parses `text` into rows of fields. Empty lines are skipped, as are
/// whitespace-only lines when `trim` is set; row numbers in errors count
/// physical records including skipped ones.
pub fn read_rows(text: &str, trim: bool) -> Result<Vec<Vec<String>>, CsvError> {
    let mut rows = Vec::new();
    let mut chars = text.chars().peekable();
    let mut row_no = 1usize;

    while chars.peek().is_some() {
        let mut fields: Vec<String> = Vec::new();
        let mut raw_line_empty = true;
        loop {
            let column = fields.len() + 1;
            let mut field = String::new();
            // Leading spaces before a quote are tolerated.
            let mut lead = String::new();
            while let Some(&c) = chars.peek() {
                if c == ' ' || c == '\t' {
                    lead.push(c);
                    chars.next();
                } else {
                    break;
                }
            }
            let end_of_record;
            if chars.peek() == Some(&'"') {
                raw_line_empty = false;
                chars.next();
                let mut closed = false;
                while let Some(c) = chars.next() {
                    if c == '"' {
                        if chars.peek() == Some(&'"') {
                            chars.next();
                            field.push('"');
                        } else {
                            closed = true;
                            break;
                        }
                    } else {
                        field.push(c);
                    }
                }
                if !closed {
                    return Err(CsvError::UnterminatedQuote {
                        row: row_no,
                        column,
                    });
                }
                let mut trailing = String::new();
                loop {
                    match chars.peek() {
                        Some(' ') | Some('\t') => trailing.push(chars.next().unwrap()),
                        Some(',') => {
                            chars.next();
                            end_of_record = false;
                            break;
                        }
                        Some('\r') | Some('\n') | None => {
                            consume_newline(&mut chars);
                            end_of_record = true;
                            break;
                        }
                        Some(&found) => {
                            return Err(CsvError::TrailingAfterQuote {
                                row: row_no,
                                column,
                                found,
                            })
                        }
                    }
                }
                if !trim {
                    field = format!("{lead}{field}{trailing}");
                }
            } else {
                field.push_str(&lead);
                loop {
                    match chars.peek() {
                        Some(',') => {
                            chars.next();
                            raw_line_empty = false;
                            end_of_record = false;
                            break;
                        }
                        Some('\r') | Some('\n') | None => {
                            consume_newline(&mut chars);
                            end_of_record = true;
                            break;
                        }
                        Some('"') => {
                            return Err(CsvError::BareQuote {
                                row: row_no,
                                column,
                            })
                        }
                        Some(_) => {
                            raw_line_empty = false;
                            field.push(chars.next().unwrap());
                        }
                    }
                }
                if trim {
                    field = field.trim_matches([' ', '\t']).to_string();
                }
            }
            fields.push(field);
            if end_of_record {
                break;
            }
        }
        let blank = raw_line_empty && fields.len() == 1 && fields[0].is_empty();
        if !blank {
            rows.push(fields);
        }
        row_no += 1;
    }
    Ok(rows)
}

fn consume_newline(chars: &mut std::iter::Peekable<std::str::Chars<'_>>) {
    match chars.peek() {
        Some('\r') => {
            chars.next();
            if chars.peek() == Some(&'\n') {
                chars.next();
            }
        }
        Some('\n') => {
            chars.next();
        }
        _ => {}
    }
}

/// Quotes a field when it contains a comma, quote or line break, or when it
/// is the only field of a record and empty (so the line is not blank).
pub fn write_field(out: &mut String, field: &str, sole_field: bool) {
    let needs_quotes = field.contains([',', '"', '\n', '\r']) || (sole_field && field.is_empty());
    if needs_quotes {
        out.push('"');
        out.push_str(&field.replace('"', "\"\""));
        out.push('"');
    } else {
        out.push_str(field);
    }
}

pub fn write_row<'a, I>(out: &mut String, fields: I)
where
    I: IntoIterator<Item = &'a str>,
    I::IntoIter: ExactSizeIterator,
{
    let fields = fields.into_iter();
    let sole = fields.len() == 1;
    for (i, field) in fields.enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_field(out, field, sole);
    }
    out.push('\n');
}
