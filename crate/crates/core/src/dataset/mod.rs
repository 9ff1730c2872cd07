//! Feature datasets built from campaign records.
//!
//! A [`RawDataset`] holds one row per non-crash run, either the final dump
//! ([`FeatureMode::Cumulative`]) or every dump flattened side by side
//! ([`FeatureMode::Temporal`]). [`preprocess`] applies the cleaning recipe and
//! a stratified split, returning a normalized [`Dataset`].
//!
//! Labels are Benign = 0, Faulty = 1.

mod preprocess;
mod table;

use serde::{Deserialize, Serialize};

use crate::injector::{CampaignResult, RunRecord};
use crate::sim::{Counter, CounterClass, PmuCounters};

pub use preprocess::{
    preprocess, stratified_split, Dataset, Normalization, PreprocessConfig, PreprocessReport,
    Splits, SplitName, STEPS,
};
pub use table::{
    format_float, load_dataset, load_raw, read_table, save_dataset, write_table, DatasetManifest, Table,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DatasetError {
    #[error("record {run} has {found} checkpoints, expected {expected}")]
    CheckpointMismatch {
        run: usize,
        expected: usize,
        found: usize,
    },
    #[error("dataset has no rows")]
    Empty,
    #[error("no rows or no features left after cleaning")]
    EmptyAfterCleaning,
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("label {label} has only {count} rows; each stratum needs at least 3")]
    SmallStratum { label: u8, count: usize },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("unknown features: {}", .0.join(", "))]
    UnknownFeatures(Vec<String>),
    #[error("temporal mode needs at least one checkpoint")]
    ZeroCheckpoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FeatureMode {
    /// Final dump only.
    Cumulative,
    /// All `checkpoints` dumps, columns named `<feature>@cp<i>`.
    Temporal { checkpoints: usize },
}

impl FeatureMode {
    pub fn describe(&self) -> String {
        match self {
            FeatureMode::Cumulative => "cumulative".into(),
            FeatureMode::Temporal { checkpoints } => format!("temporal:{checkpoints}"),
        }
    }
}

/// Ratio features appended after the raw counters: (name, class, numerator,
/// denominator terms). NaN when the denominator is 0.
const DERIVED: &[(&str, CounterClass, Counter, &[Counter])] = &[
    ("cpu.icache.miss_rate", CounterClass::CpuIcache, Counter::IcacheReadMisses, &[Counter::IcacheReadAccesses]),
    ("cpu.dcache.read_miss_rate", CounterClass::CpuDcache, Counter::DcacheReadMisses, &[Counter::DcacheReadAccesses]),
    ("cpu.dcache.write_miss_rate", CounterClass::CpuDcache, Counter::DcacheWriteMisses, &[Counter::DcacheWriteAccesses]),
    ("cpu.dcache.overall_miss_rate", CounterClass::CpuDcache, Counter::DcacheOverallMisses, &[Counter::DcacheOverallAccesses]),
    ("cpu.branch_taken_rate", CounterClass::CpuBranch, Counter::BranchesTaken, &[Counter::NumBranches]),
    ("membus.bytes_per_txn", CounterClass::Membus, Counter::MembusBytes, &[Counter::MembusTransactions]),
    ("mem_ctrls.row_hit_rate", CounterClass::MemCtrls, Counter::MemCtrlsRowHits, &[Counter::MemCtrlsRowHits, Counter::MemCtrlsRowMisses]),
];

pub const NUM_DERIVED: usize = DERIVED.len();
pub const NUM_BASE_FEATURES: usize = crate::sim::NUM_COUNTERS + NUM_DERIVED;

/// Derived ratio features for one dump, in column order.
pub fn add_derived_features(stats: &PmuCounters) -> Vec<(&'static str, f64)> {
    DERIVED
        .iter()
        .map(|&(name, _, num, den)| {
            let d: u64 = den.iter().map(|&c| stats.get(c)).sum();
            let v = if d == 0 {
                f64::NAN
            } else {
                stats.get(num) as f64 / d as f64
            };
            (name, v)
        })
        .collect()
}

/// Counter names followed by derived feature names.
pub fn base_feature_names() -> Vec<String> {
    Counter::ALL
        .iter()
        .map(|c| c.name().to_string())
        .chain(DERIVED.iter().map(|d| d.0.to_string()))
        .collect()
}

/// Counters then derived features of one dump.
pub fn base_features(stats: &PmuCounters) -> Vec<f64> {
    let mut row: Vec<f64> = stats.values().iter().map(|&v| v as f64).collect();
    row.extend(add_derived_features(stats).into_iter().map(|(_, v)| v));
    row
}

pub fn temporal_name(base: &str, checkpoint: usize) -> String {
    format!("{base}@cp{checkpoint}")
}

/// Splits `name@cpN` into `(name, Some(N))`.
pub fn split_temporal_name(name: &str) -> (&str, Option<usize>) {
    if let Some((base, cp)) = name.rsplit_once("@cp") {
        if let Ok(i) = cp.parse() {
            return (base, Some(i));
        }
    }
    (name, None)
}

/// Counter class of a feature, temporal suffixes ignored.
pub fn feature_class(name: &str) -> Option<CounterClass> {
    let base = split_temporal_name(name).0;
    Counter::from_name(base)
        .map(Counter::class)
        .or_else(|| DERIVED.iter().find(|d| d.0 == base).map(|d| d.1))
}

pub fn feature_names(mode: FeatureMode) -> Vec<String> {
    let base = base_feature_names();
    match mode {
        FeatureMode::Cumulative => base,
        FeatureMode::Temporal { checkpoints } => (0..checkpoints)
            .flat_map(|i| base.iter().map(move |b| temporal_name(b, i)))
            .collect(),
    }
}

pub fn collect_features(record: &RunRecord, mode: FeatureMode) -> Result<Vec<f64>, DatasetError> {
    match mode {
        FeatureMode::Cumulative => Ok(base_features(record.final_stats())),
        FeatureMode::Temporal { checkpoints: 0 } => Err(DatasetError::ZeroCheckpoints),
        FeatureMode::Temporal { checkpoints } => {
            if record.stats_checkpoints.len() != checkpoints {
                return Err(DatasetError::CheckpointMismatch {
                    run: record.run,
                    expected: checkpoints,
                    found: record.stats_checkpoints.len(),
                });
            }
            Ok(record.stats_checkpoints.iter().flat_map(base_features).collect())
        }
    }
}

/// Unclean feature rows; values may be NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    /// Campaign run index of each row.
    pub runs: Vec<usize>,
}

impl RawDataset {
    /// Rows for every non-crash record.
    pub fn from_campaign(result: &CampaignResult, mode: FeatureMode) -> Result<Self, DatasetError> {
        let mut ds = RawDataset {
            feature_names: feature_names(mode),
            rows: Vec::new(),
            labels: Vec::new(),
            runs: Vec::new(),
        };
        for r in &result.records {
            let Some(label) = r.outcome.label() else { continue };
            ds.rows.push(collect_features(r, mode)?);
            ds.labels.push(label);
            ds.runs.push(r.run);
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }
}

/// Rows of `rows` restricted to `columns`.
pub(crate) fn pick_columns(rows: &[Vec<f64>], columns: &[usize]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| columns.iter().map(|&c| r[c]).collect())
        .collect()
}
