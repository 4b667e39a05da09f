//! Text and CSV renderings of evaluation results and training history.

use std::path::Path;

use semiseg_core::metrics::{ClusterReport, EvalReport};
use semiseg_core::training::EpochRecord;

use crate::csv_io;
use crate::error::IoResult;
use crate::kv::KeyValues;

/// Written for empty entropy cells.
pub const MISSING: &str = "none";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), |x| x.to_string())
}

pub fn eval_key_values(r: &EvalReport) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.set("macro_f1", r.macro_f1.to_string());
    kv.set("n_frames", r.support.iter().sum::<usize>().to_string());
    for k in 0..r.per_class_f1.len() {
        kv.set(format!("class.{k}.f1"), r.per_class_f1[k].to_string());
        kv.set(format!("class.{k}.support"), r.support[k].to_string());
        kv.set(format!("class.{k}.entropy_tp"), opt(r.entropy_tp[k]));
        kv.set(format!("class.{k}.entropy_fp"), opt(r.entropy_fp[k]));
    }
    kv
}

/// `report.txt` with scalar results and `confusion.csv` (rows true,
/// columns predicted).
pub fn write_eval(dir: &Path, r: &EvalReport) -> IoResult<Vec<std::path::PathBuf>> {
    let report = dir.join("report.txt");
    eval_key_values(r).write(&report)?;
    let confusion = dir.join("confusion.csv");
    let k = r.confusion.len();
    let header: Vec<String> = std::iter::once("true".to_string())
        .chain((0..k).map(|j| format!("pred_{j}")))
        .collect();
    let rows: Vec<Vec<String>> = r
        .confusion
        .iter()
        .enumerate()
        .map(|(i, row)| std::iter::once(i.to_string()).chain(row.iter().map(u64::to_string)).collect())
        .collect();
    csv_io::write_table(&confusion, &header.iter().map(String::as_str).collect::<Vec<_>>(), &rows)?;
    Ok(vec![report, confusion])
}

pub fn write_cluster(path: &Path, r: &ClusterReport) -> IoResult<()> {
    let rows: Vec<Vec<String>> = (0..r.n_clusters.len())
        .map(|i| {
            vec![
                r.n_clusters[i].to_string(),
                r.homogeneity[i].to_string(),
                r.completeness[i].to_string(),
                r.v_measure[i].to_string(),
                r.seed.to_string(),
            ]
        })
        .collect();
    csv_io::write_table(
        path,
        &["n_clusters", "homogeneity", "completeness", "v_measure", "seed"],
        &rows,
    )
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> IoResult<()> {
    let rows: Vec<Vec<String>> = history
        .iter()
        .map(|r| {
            let mut row = vec![r.epoch.to_string()];
            row.extend(r.to_row()[1..].iter().map(f64::to_string));
            row
        })
        .collect();
    csv_io::write_table(path, &EpochRecord::FIELDS, &rows)
}
