use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, RawDataset};

/// Recipe steps, in the order they are applied.
pub const STEPS: [&str; 5] = [
    "drop_features_nan_fraction_above_threshold",
    "drop_zero_variance_features",
    "drop_rows_with_nan",
    "fill_missing_with_zero",
    "zscore_with_train_statistics",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Features with a NaN fraction strictly above this are dropped.
    pub nan_threshold: f64,
    /// Train / validation / test fractions.
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            nan_threshold: 0.05,
            ratios: [0.60, 0.15, 0.25],
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        })
    }
}

impl FromStr for SplitName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" | "validation" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            _ => Err(format!("unknown split `{s}` (expected train, val or test)")),
        }
    }
}

/// Row indices of each split, ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn get(&self, which: SplitName) -> &[usize] {
        match which {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }
}

/// Stratified by label. Each stratum is shuffled with its own stream, then cut
/// at `round(n * ratios[0])` and `round(n * ratios[1])`.
pub fn stratified_split(labels: &[u8], ratios: [f64; 3], seed: u64) -> Result<Splits, DatasetError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(DatasetError::BadRatios(ratios));
    }
    let mut strata: Vec<u8> = labels.to_vec();
    strata.sort_unstable();
    strata.dedup();
    let mut splits = Splits::default();
    for label in strata {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        let n = idx.len();
        if n < 3 {
            return Err(DatasetError::SmallStratum { label, count: n });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(label));
        idx.shuffle(&mut rng);
        let n_train = ((n as f64 * ratios[0]).round() as usize).min(n);
        let n_val = ((n as f64 * ratios[1]).round() as usize).min(n - n_train);
        splits.train.extend_from_slice(&idx[..n_train]);
        splits.val.extend_from_slice(&idx[n_train..n_train + n_val]);
        splits.test.extend_from_slice(&idx[n_train + n_val..]);
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();
    Ok(splits)
}

/// Per-feature z-score parameters (population std over training rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub features: Vec<String>,
    pub mean: Vec<f64>,
    /// 1.0 where the training rows are constant.
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn fit(features: Vec<String>, rows: &[Vec<f64>], train: &[usize]) -> Self {
        let width = features.len();
        let n = train.len() as f64;
        let mut mean = vec![0.0; width];
        let mut std = vec![1.0; width];
        if !train.is_empty() {
            for (j, (m, s)) in mean.iter_mut().zip(std.iter_mut()).enumerate() {
                *m = train.iter().map(|&i| rows[i][j]).sum::<f64>() / n;
                let var = train.iter().map(|&i| (rows[i][j] - *m).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                *s = if sd > 0.0 { sd } else { 1.0 };
            }
        }
        Self { features, mean, std }
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = (*x - m) / s;
        }
    }

    /// Parameters for `names`, in that order.
    pub fn select(&self, names: &[String]) -> Result<Self, DatasetError> {
        let mut out = Self {
            features: Vec::new(),
            mean: Vec::new(),
            std: Vec::new(),
        };
        let mut missing = Vec::new();
        for n in names {
            match self.features.iter().position(|f| f == n) {
                Some(j) => {
                    out.features.push(n.clone());
                    out.mean.push(self.mean[j]);
                    out.std.push(self.std[j]);
                }
                None => missing.push(n.clone()),
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(DatasetError::UnknownFeatures(missing))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub steps: Vec<String>,
    pub input_rows: usize,
    pub input_features: usize,
    pub dropped_nan_features: Vec<String>,
    pub dropped_zero_variance: Vec<String>,
    /// Run indices of rows removed for containing NaN.
    pub dropped_rows: Vec<usize>,
    /// Cells set to zero in the fill step.
    pub filled_missing: usize,
}

/// A cleaned, normalized dataset with its split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub runs: Vec<usize>,
    pub splits: Splits,
    pub normalization: Normalization,
    pub report: PreprocessReport,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    /// Column indices of `names`, or every missing name.
    pub fn columns(&self, names: &[String]) -> Result<Vec<usize>, DatasetError> {
        let mut idx = Vec::with_capacity(names.len());
        let mut missing = Vec::new();
        for n in names {
            match self.column(n) {
                Some(j) => idx.push(j),
                None => missing.push(n.clone()),
            }
        }
        if missing.is_empty() {
            Ok(idx)
        } else {
            Err(DatasetError::UnknownFeatures(missing))
        }
    }

    /// Rows and labels of one split, restricted to `columns`.
    pub fn split_matrix(&self, which: SplitName, columns: &[usize]) -> (Vec<Vec<f64>>, Vec<u8>) {
        let idx = self.splits.get(which);
        let rows = idx
            .iter()
            .map(|&i| columns.iter().map(|&c| self.rows[i][c]).collect())
            .collect();
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        (rows, labels)
    }

    /// A copy keeping only `names`; columns stay in their original order.
    pub fn select_features(&self, names: &[String]) -> Result<Dataset, DatasetError> {
        let mut cols = self.columns(names)?;
        cols.sort_unstable();
        cols.dedup();
        let feature_names: Vec<String> = cols.iter().map(|&c| self.feature_names[c].clone()).collect();
        Ok(Dataset {
            rows: super::pick_columns(&self.rows, &cols),
            normalization: self.normalization.select(&feature_names)?,
            feature_names,
            labels: self.labels.clone(),
            runs: self.runs.clone(),
            splits: self.splits.clone(),
            report: self.report.clone(),
        })
    }

    pub fn to_raw(&self) -> RawDataset {
        RawDataset {
            feature_names: self.feature_names.clone(),
            rows: self.rows.clone(),
            labels: self.labels.clone(),
            runs: self.runs.clone(),
        }
    }

    /// Count of the most common label divided by the split size.
    pub fn majority_baseline(&self, which: SplitName) -> f64 {
        let idx = self.splits.get(which);
        if idx.is_empty() {
            return 0.0;
        }
        let faulty = idx.iter().filter(|&&i| self.labels[i] == 1).count();
        faulty.max(idx.len() - faulty) as f64 / idx.len() as f64
    }
}

/// Cleans, splits and normalizes `raw`.
pub fn preprocess(raw: &RawDataset, config: &PreprocessConfig) -> Result<Dataset, DatasetError> {
    if raw.is_empty() {
        return Err(DatasetError::Empty);
    }
    for (i, r) in raw.rows.iter().enumerate() {
        if r.len() != raw.width() {
            return Err(DatasetError::Row {
                row: i + 1,
                message: format!("has {} values, expected {}", r.len(), raw.width()),
            });
        }
    }
    let n = raw.len();
    let mut report = PreprocessReport {
        steps: STEPS.iter().map(|s| s.to_string()).collect(),
        input_rows: n,
        input_features: raw.width(),
        ..Default::default()
    };

    // Step 1: NaN fraction.
    let mut keep: Vec<usize> = Vec::new();
    for j in 0..raw.width() {
        let nan = raw.rows.iter().filter(|r| r[j].is_nan()).count();
        if nan as f64 / n as f64 > config.nan_threshold {
            report.dropped_nan_features.push(raw.feature_names[j].clone());
        } else {
            keep.push(j);
        }
    }

    // Step 2: zero variance over the non-NaN values of all rows.
    keep.retain(|&j| {
        let mut vals = raw.rows.iter().map(|r| r[j]).filter(|v| !v.is_nan());
        let constant = match vals.next() {
            None => true,
            Some(first) => vals.all(|v| v == first),
        };
        if constant {
            report.dropped_zero_variance.push(raw.feature_names[j].clone());
        }
        !constant
    });

    // Step 3: rows with any NaN in a retained feature.
    let mut row_keep = Vec::with_capacity(n);
    for (i, r) in raw.rows.iter().enumerate() {
        if keep.iter().any(|&j| r[j].is_nan()) {
            report.dropped_rows.push(raw.runs[i]);
        } else {
            row_keep.push(i);
        }
    }
    if keep.is_empty() || row_keep.is_empty() {
        return Err(DatasetError::EmptyAfterCleaning);
    }

    let feature_names: Vec<String> = keep.iter().map(|&j| raw.feature_names[j].clone()).collect();
    let mut rows: Vec<Vec<f64>> = row_keep
        .iter()
        .map(|&i| keep.iter().map(|&j| raw.rows[i][j]).collect())
        .collect();
    let labels: Vec<u8> = row_keep.iter().map(|&i| raw.labels[i]).collect();
    let runs: Vec<usize> = row_keep.iter().map(|&i| raw.runs[i]).collect();

    // Step 4: unreachable after step 3 but kept in the recipe.
    for x in rows.iter_mut().flatten() {
        if x.is_nan() {
            *x = 0.0;
            report.filled_missing += 1;
        }
    }

    // Step 5.
    let splits = stratified_split(&labels, config.ratios, config.seed)?;
    let normalization = Normalization::fit(feature_names.clone(), &rows, &splits.train);
    for r in &mut rows {
        normalization.apply(r);
    }

    Ok(Dataset {
        feature_names,
        rows,
        labels,
        runs,
        splits,
        normalization,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(cols: &[(&str, Vec<f64>)], labels: Vec<u8>) -> RawDataset {
        let n = labels.len();
        RawDataset {
            feature_names: cols.iter().map(|c| c.0.to_string()).collect(),
            rows: (0..n).map(|i| cols.iter().map(|c| c.1[i]).collect()).collect(),
            labels,
            runs: (0..n).collect(),
        }
    }

    fn labels_75_25(n: usize) -> Vec<u8> {
        (0..n).map(|i| u8::from(i % 4 == 3)).collect()
    }

    #[test]
    fn split_arithmetic_and_determinism() {
        let labels = labels_75_25(100);
        let s = stratified_split(&labels, [0.6, 0.15, 0.25], 9).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (60, 15, 25));
        let benign = |v: &[usize]| v.iter().filter(|&&i| labels[i] == 0).count();
        assert_eq!((benign(&s.train), benign(&s.val), benign(&s.test)), (45, 11, 19));
        assert_eq!(s, stratified_split(&labels, [0.6, 0.15, 0.25], 9).unwrap());
        assert_ne!(s, stratified_split(&labels, [0.6, 0.15, 0.25], 10).unwrap());
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());

        let s = stratified_split(&labels, [1.0, 0.0, 0.0], 9).unwrap();
        assert_eq!(s.train.len(), 100);
        assert!(s.val.is_empty() && s.test.is_empty());
    }

    #[test]
    fn split_errors() {
        assert_eq!(
            stratified_split(&[0, 0, 0, 1, 1], [0.6, 0.15, 0.25], 0),
            Err(DatasetError::SmallStratum { label: 1, count: 2 })
        );
        assert!(matches!(
            stratified_split(&[0; 10], [0.5, 0.5, 0.5], 0),
            Err(DatasetError::BadRatios(_))
        ));
    }

    #[test]
    fn nan_threshold_is_strict() {
        let n = 100;
        let mut six = vec![1.0; n];
        let mut five = vec![1.0; n];
        let varied: Vec<f64> = (0..n).map(|i| i as f64).collect();
        for i in 0..6 {
            six[i * 10] = f64::NAN;
        }
        for i in 0..5 {
            five[i * 10 + 1] = f64::NAN;
        }
        five[50] = 2.0;
        six[51] = 2.0;
        let r = raw(&[("six", six), ("five", five), ("v", varied)], labels_75_25(n));
        let d = preprocess(&r, &PreprocessConfig::default()).unwrap();
        assert_eq!(d.report.dropped_nan_features, vec!["six"]);
        assert_eq!(d.feature_names, vec!["five", "v"]);
        assert_eq!(d.report.dropped_rows, vec![1, 11, 21, 31, 41]);
        assert_eq!(d.len(), 95);
    }

    #[test]
    fn empty_inputs_error() {
        let r = raw(&[("c", vec![1.0; 12])], labels_75_25(12));
        assert_eq!(preprocess(&r, &PreprocessConfig::default()), Err(DatasetError::EmptyAfterCleaning));
        let r = raw(&[], vec![]);
        assert_eq!(preprocess(&r, &PreprocessConfig::default()), Err(DatasetError::Empty));
    }
}
