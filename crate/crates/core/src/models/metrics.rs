use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::dataset::format_float;
use crate::io::parse_error;
use crate::{Error, Result};

/// Confusion counts with Faulty as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, truth: u8, predicted: u8) {
        match (truth, predicted) {
            (1, 1) => self.tp += 1,
            (0, 1) => self.fp += 1,
            (1, _) => self.fn_ += 1,
            _ => self.tn += 1,
        }
    }
}

/// Precision, recall and F1 are `None` when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub confusion: Confusion,
}

pub fn metrics_from_confusion(tp: u64, fp: u64, fn_: u64, tn: u64) -> Result<Metrics, ModelError> {
    let confusion = Confusion { tp, fp, fn_, tn };
    let total = confusion.total();
    if total == 0 {
        return Err(ModelError::EmptyConfusion);
    }
    let ratio = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = match (precision, recall) {
        (Some(_), Some(_)) => ratio(2 * tp, 2 * tp + fp + fn_),
        _ => None,
    };
    Ok(Metrics {
        accuracy: (tp + tn) as f64 / total as f64,
        precision,
        recall,
        f1,
        confusion,
    })
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Result<Self, ModelError> {
        metrics_from_confusion(c.tp, c.fp, c.fn_, c.tn)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), format_float)
}

/// One row of a metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// Leading key columns, e.g. `("checkpoint", "3")`.
    pub keys: Vec<(String, String)>,
    pub architecture: String,
    pub metrics: Metrics,
}

/// `<keys...>,Architecture,Accuracy,Precision,Recall,F1,tp,fp,fn,tn`.
/// Undefined values are written as `undefined`.
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| parse_error(path, e))?;
    let wrap = |e| parse_error(path, e);
    let mut header: Vec<String> = rows
        .first()
        .map(|r| r.keys.iter().map(|k| k.0.clone()).collect())
        .unwrap_or_default();
    header.extend(
        ["Architecture", "Accuracy", "Precision", "Recall", "F1", "tp", "fp", "fn", "tn"].map(String::from),
    );
    w.write_record(&header).map_err(wrap)?;
    for r in rows {
        let m = &r.metrics;
        let mut rec: Vec<String> = r.keys.iter().map(|k| k.1.clone()).collect();
        rec.extend([
            r.architecture.clone(),
            format_float(m.accuracy),
            opt(m.precision),
            opt(m.recall),
            opt(m.f1),
            m.confusion.tp.to_string(),
            m.confusion.fp.to_string(),
            m.confusion.fn_.to_string(),
            m.confusion.tn.to_string(),
        ]);
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
