//! File formats: CSV datasets with a header row, JSON graphs and models,
//! JSON reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Dag, GraphSpec};
use crate::sem::{LinearSem, ModelSpec};
use crate::stats::Dataset;

fn parse_err(path: &Path, location: impl std::fmt::Display, message: impl Into<String>) -> Error {
    Error::Parse { location: format!("{}:{location}", path.display()), message: message.into() }
}

/// Reads a numeric CSV with a header of unique column names. Columns are
/// centered on load.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path).map_err(|e| {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => parse_err(path, 1, format!("{other:?}")),
        }
    })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().any(String::is_empty) {
        return Err(parse_err(path, 1, "malformed header: empty column name"));
    }
    for (i, h) in header.iter().enumerate() {
        if header[..i].contains(h) {
            return Err(parse_err(path, 1, format!("duplicate column `{h}`")));
        }
    }
    let p = header.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        if record.len() != p {
            return Err(parse_err(path, line, format!("expected {p} fields, found {}", record.len())));
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(path, line, format!("non-numeric value `{cell}` in column `{}`", header[c])))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("non-finite value in column `{}`", header[c])));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err(path, 2, "no data rows"));
    }
    Dataset::new(header, DMatrix::from_row_slice(rows, p, &values))
}

/// Writes a dataset as CSV using shortest round-trip float formatting.
pub fn write_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(data.columns()).map_err(csv_io)?;
    let m = data.values();
    let mut row = Vec::with_capacity(m.ncols());
    for r in 0..m.nrows() {
        row.clear();
        row.extend((0..m.ncols()).map(|c| m[(r, c)].to_string()));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Numerical(format!("csv writer: {other:?}")),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, format!("{}:{}", e.line(), e.column()), e.to_string()))
}

/// Reads a graph file (`{"vertices": [...], "edges": [[from, to], ...]}`).
/// Model files are accepted too; their extra fields are ignored.
pub fn load_graph(path: impl AsRef<Path>) -> Result<Dag> {
    let path = path.as_ref();
    let spec: GraphSpec = read_json(path)?;
    for (i, (a, b)) in spec.edges.iter().enumerate() {
        for end in [a, b] {
            if !spec.vertices.iter().any(|v| &v.name == end) {
                return Err(parse_err(path, format!("edge {i} ({a} -> {b})"), format!("unknown vertex `{end}`")));
            }
        }
    }
    spec.build()
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LinearSem> {
    let spec: ModelSpec = read_json(path.as_ref())?;
    spec.build()
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_graph(g: &Dag, path: impl AsRef<Path>) -> Result<()> {
    write_json(&g.to_spec(), path)
}

pub fn write_model(m: &LinearSem, path: impl AsRef<Path>) -> Result<()> {
    write_json(&m.to_spec(), path)
}
