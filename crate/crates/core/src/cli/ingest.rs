//! CSV ingestion: comma separated, `.` decimal mark, UTF-8, header row.
//!
//! Empty cells and `NA` / `NaN` (any case) count as missing; rows missing a
//! used column are dropped and reported. Anything else that does not parse as
//! a finite decimal is an error.

use std::path::Path;

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DropReport {
    /// 1-based data row numbers (header excluded) that were dropped.
    pub dropped_rows: Vec<usize>,
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
}

/// Reads the `columns` of a CSV file. Row ids of the result are the 1-based
/// data row numbers.
pub fn ingest(path: &Path, columns: &[String], binary: &[String]) -> Result<(Dataset, DropReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(Error::Parse(format!("{}: empty file", path.display())));
    }
    let positions = columns
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| Error::MissingColumn(c.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(b) = binary.iter().find(|b| !columns.contains(b)) {
        if !header.iter().any(|h| h == b) {
            return Err(Error::MissingColumn(b.clone()));
        }
    }

    let mut values: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    let mut row_ids = Vec::new();
    let mut report = DropReport::default();
    let mut seen = 0;
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Parse(format!("row {row}: {e}")))?;
        seen += 1;
        let mut parsed = Vec::with_capacity(columns.len());
        let mut missing = false;
        for (c, &pos) in positions.iter().enumerate() {
            let cell = record.get(pos).unwrap_or("");
            if is_missing(cell) {
                missing = true;
                continue;
            }
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::Parse(format!(
                    "row {row}, column \"{}\": cannot parse \"{cell}\" as a number",
                    columns[c]
                ))
            })?;
            if binary.contains(&columns[c]) && v != 0.0 && v != 1.0 {
                return Err(Error::Parse(format!(
                    "row {row}, column \"{}\": binary column holds {cell}",
                    columns[c]
                )));
            }
            parsed.push(v);
        }
        if missing {
            report.dropped_rows.push(row);
            continue;
        }
        for (col, v) in values.iter_mut().zip(parsed) {
            col.push(v);
        }
        row_ids.push(row);
    }
    if seen == 0 {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }
    let mut data = Dataset::with_row_ids(
        columns.iter().cloned().zip(values).collect::<Vec<_>>(),
        row_ids,
    )?;
    data.source = Some(path.to_path_buf());
    Ok((data, report))
}

/// Writes a dataset as CSV with full-precision (round-trip) numbers.
pub fn write_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    w.write_record(data.names()).map_err(|e| Error::Parse(e.to_string()))?;
    for i in 0..data.n_rows() {
        w.write_record(data.row(i).iter().map(|v| v.to_string()))
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
