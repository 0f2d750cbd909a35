//! CSV ingestion: header row required, columns selected by name or by
//! one-based position, no imputation.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::quantile::TimeSeries;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("column `{0}` not found in any input")]
    MissingColumn(String),

    /// `row` is the one-based data row, not counting the header.
    #[error("non-numeric or missing value in column `{col}` at data row {row}")]
    NonNumericCell { row: usize, col: String },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

/// One parsed file: header names and raw string cells by row.
#[derive(Debug, Clone)]
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    path: PathBuf,
}

fn read_table(path: &Path) -> Result<Table, IngestError> {
    let io = |e: csv::Error| IngestError::Io { path: path.to_path_buf(), message: e.to_string() };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path).map_err(io)?;
    let header: Vec<String> = rdr.headers().map_err(io)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => IngestError::LengthMismatch(format!(
                "{}: data row {} has {len} fields, header has {expected_len}",
                path.display(),
                i + 1
            )),
            _ => io(e),
        })?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(Table { header, rows, path: path.to_path_buf() })
}

fn locate<'a>(tables: &'a [Table], sel: &str) -> Result<(&'a Table, usize), IngestError> {
    for t in tables {
        if let Some(c) = t.header.iter().position(|h| h == sel) {
            return Ok((t, c));
        }
    }
    if let Ok(pos) = sel.parse::<usize>() {
        if tables.len() == 1 && pos >= 1 && pos <= tables[0].header.len() {
            return Ok((&tables[0], pos - 1));
        }
    }
    Err(IngestError::MissingColumn(sel.to_string()))
}

/// Reads the selected columns from the input files. Every selected column
/// must be fully numeric and all columns must have equal length.
pub fn ingest_csv(paths: &[PathBuf], columns: &[String]) -> Result<Vec<TimeSeries>, IngestError> {
    let tables: Vec<Table> = paths.iter().map(|p| read_table(p)).collect::<Result<_, _>>()?;
    let mut out: Vec<(String, Vec<f64>)> = Vec::with_capacity(columns.len());
    for sel in columns {
        let (table, c) = locate(&tables, sel)?;
        let values = table
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[c].parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| IngestError::NonNumericCell { row: i + 1, col: sel.clone() })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        out.push((format!("{} in {}", sel, table.path.display()), values));
    }
    if let Some(first) = out.first() {
        if let Some(other) = out.iter().find(|o| o.1.len() != first.1.len()) {
            return Err(IngestError::LengthMismatch(format!(
                "`{}` has {} rows but `{}` has {}",
                first.0,
                first.1.len(),
                other.0,
                other.1.len()
            )));
        }
    }
    out.into_iter()
        .map(|(name, v)| {
            TimeSeries::new(v).map_err(|e| IngestError::LengthMismatch(format!("`{name}`: {e}")))
        })
        .collect()
}
