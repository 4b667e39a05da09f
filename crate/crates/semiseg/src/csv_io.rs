//! Feature and label CSV files.

use std::path::Path;

use semiseg_core::data::FeatureSequence;
use semiseg_core::Tensor;

use crate::error::{IoError, IoResult};

fn reader(path: &Path, header: bool) -> IoResult<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_error(path: &Path, rec: &csv::StringRecord, message: String) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        line: rec.position().map_or(0, |p| p.line() as usize),
        message,
    }
}

fn csv_error(path: &Path, e: csv::Error) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

/// One frame per row, comma-separated reals. With `header`, the first row is
/// skipped.
pub fn read_features(path: &Path, header: bool) -> IoResult<Tensor> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in reader(path, header)?.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = rec
            .iter()
            .map(|cell| {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_error(path, &rec, format!("non-numeric cell `{cell}`")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_error(path, &rec, format!("non-finite value `{cell}`")))
                }
            })
            .collect::<IoResult<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_error(
                    path,
                    &rec,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(IoError::format(path, "no feature rows"));
    }
    Ok(Tensor::from_rows(&rows)?)
}

/// One integer label per row; `-1` marks an unlabeled frame.
pub fn read_labels(path: &Path, header: bool) -> IoResult<Vec<i32>> {
    let mut out = Vec::new();
    for rec in reader(path, header)?.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != 1 {
            return Err(parse_error(path, &rec, format!("expected one label, found {} cells", rec.len())));
        }
        let v: i32 = rec[0]
            .parse()
            .map_err(|_| parse_error(path, &rec, format!("invalid label `{}`", &rec[0])))?;
        out.push(v);
    }
    Ok(out)
}

/// Loads and validates a sequence. Without a labels file every frame is
/// unlabeled.
pub fn load_sequence(
    id: &str,
    features: &Path,
    labels: Option<&Path>,
    sample_rate_hz: f64,
    n_classes: Option<usize>,
    header: bool,
) -> IoResult<FeatureSequence> {
    let x = read_features(features, header)?;
    let y = labels.map(|p| read_labels(p, header)).transpose()?;
    let seq = FeatureSequence::new(id, x, sample_rate_hz, y)?;
    seq.validate(n_classes)?;
    Ok(seq)
}

fn create(path: &Path) -> IoResult<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| IoError::format(path, e.to_string()))
}

/// Writes a matrix without a header. Values use the shortest representation
/// that parses back to the same `f64`.
pub fn write_matrix(path: &Path, x: &Tensor) -> IoResult<()> {
    let mut w = create(path)?;
    for t in 0..x.rows() {
        w.write_record(x.row(t).iter().map(|v| v.to_string()))
            .map_err(|e| IoError::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

pub fn write_column<T: ToString>(path: &Path, values: &[T]) -> IoResult<()> {
    let mut w = create(path)?;
    for v in values {
        w.write_record([v.to_string()])
            .map_err(|e| IoError::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Writes rows with a header line.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> IoResult<()> {
    let mut w = create(path)?;
    let map = |e: csv::Error| IoError::format(path, e.to_string());
    w.write_record(header).map_err(map)?;
    for r in rows {
        w.write_record(r).map_err(map)?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}
