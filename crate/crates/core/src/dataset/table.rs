//! CSV tables and dataset directories.
//!
//! A table has a header of feature names followed by `label`. Floats are
//! written with 17 significant digits; NaN is an empty cell.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureMode, PreprocessConfig, RawDataset};
use crate::io::{parse_error, read_json, write_json};
use crate::{Error, Result};

pub const FORMAT: &str = "pmufault-dataset";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_table(path: &Path, feature_names: &[String], rows: &[Vec<f64>], labels: &[u8]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| parse_error(path, e))?;
    let wrap = |e| parse_error(path, e);
    w.write_record(feature_names.iter().map(String::as_str).chain(["label"]))
        .map_err(wrap)?;
    for (r, l) in rows.iter().zip(labels) {
        let mut rec: Vec<String> = r.iter().map(|&v| format_float(v)).collect();
        rec.push(l.to_string());
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| parse_error(path, e))?;
    let mut header: Vec<String> = r
        .headers()
        .map_err(|e| parse_error(path, e))?
        .iter()
        .map(String::from)
        .collect();
    if header.pop().as_deref() != Some("label") {
        return Err(parse_error(path, "last column must be `label`"));
    }
    let width = header.len();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row_no = i + 1;
        let rec = rec.map_err(|e| parse_error(path, format!("row {row_no}: {e}")))?;
        if rec.len() != width + 1 {
            return Err(parse_error(
                path,
                format!("row {row_no}: has {} fields, expected {}", rec.len(), width + 1),
            ));
        }
        let mut row = Vec::with_capacity(width);
        for (j, cell) in rec.iter().take(width).enumerate() {
            let v = if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse::<f64>().map_err(|_| {
                    parse_error(path, format!("row {row_no}, column `{}`: bad number `{cell}`", header[j]))
                })?
            };
            row.push(v);
        }
        let label = match &rec[width] {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_error(path, format!("row {row_no}: bad label `{other}`"))),
        };
        rows.push(row);
        labels.push(label);
    }
    Ok(Table {
        feature_names: header,
        rows,
        labels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub format_version: u32,
    pub tool_version: String,
    pub mode: FeatureMode,
    /// Campaign directory the rows came from.
    pub source: Option<String>,
    pub preprocess: PreprocessConfig,
    pub raw_rows: usize,
    pub raw_features: usize,
    pub report: super::PreprocessReport,
    pub normalization: super::Normalization,
    pub splits: super::Splits,
    pub runs: Vec<usize>,
    pub raw_runs: Vec<usize>,
}

/// Writes `manifest.json`, `raw.csv` and `dataset.csv` into `dir`.
pub fn save_dataset(
    dir: &Path,
    raw: &RawDataset,
    dataset: &Dataset,
    mode: FeatureMode,
    preprocess: &PreprocessConfig,
    source: Option<String>,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_table(&dir.join("raw.csv"), &raw.feature_names, &raw.rows, &raw.labels)?;
    write_table(&dir.join("dataset.csv"), &dataset.feature_names, &dataset.rows, &dataset.labels)?;
    let manifest = DatasetManifest {
        format: FORMAT.into(),
        format_version: FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        mode,
        source,
        preprocess: preprocess.clone(),
        raw_rows: raw.len(),
        raw_features: raw.width(),
        report: dataset.report.clone(),
        normalization: dataset.normalization.clone(),
        splits: dataset.splits.clone(),
        runs: dataset.runs.clone(),
        raw_runs: raw.runs.clone(),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

/// Reads a dataset directory written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Dataset)> {
    let mpath = dir.join("manifest.json");
    let manifest: DatasetManifest = read_json(&mpath)?;
    if manifest.format != FORMAT || manifest.format_version != FORMAT_VERSION {
        return Err(parse_error(&mpath, format!("not a {FORMAT} v{FORMAT_VERSION} manifest")));
    }
    let tpath = dir.join("dataset.csv");
    let t = read_table(&tpath)?;
    if t.rows.len() != manifest.runs.len() {
        return Err(parse_error(
            &tpath,
            format!("{} rows, manifest lists {} runs", t.rows.len(), manifest.runs.len()),
        ));
    }
    if t.feature_names != manifest.normalization.features {
        return Err(parse_error(&tpath, "columns differ from the manifest's normalization features"));
    }
    let ds = Dataset {
        feature_names: t.feature_names,
        rows: t.rows,
        labels: t.labels,
        runs: manifest.runs.clone(),
        splits: manifest.splits.clone(),
        normalization: manifest.normalization.clone(),
        report: manifest.report.clone(),
    };
    Ok((manifest, ds))
}

/// Reads `raw.csv` of a dataset directory.
pub fn load_raw(dir: &Path, manifest: &DatasetManifest) -> Result<RawDataset> {
    let t = read_table(&dir.join("raw.csv"))?;
    Ok(RawDataset {
        feature_names: t.feature_names,
        rows: t.rows,
        labels: t.labels,
        runs: manifest.raw_runs.clone(),
    })
}
