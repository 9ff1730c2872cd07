//! The workbench configuration file (TOML). Every section is optional; a
//! missing key takes its default. `pmufault config` prints the full schema
//! with defaults filled in.

use std::path::Path;

use pmufault::dataset::{PreprocessConfig, SplitName};
use pmufault::injector::CampaignConfig;
use pmufault::models::ModelsConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct WorkbenchConfig {
    pub campaign: CampaignConfig,
    pub dataset: DatasetOptions,
    pub analysis: AnalysisOptions,
    pub models: ModelsConfig,
    pub eval: EvalOptions,
    pub sweep: SweepOptions,
    pub output: OutputOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    #[default]
    Cumulative,
    /// One column per counter and checkpoint.
    Temporal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetOptions {
    pub mode: ModeName,
    pub preprocess: PreprocessConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    /// PCA components written by `analyze pca`.
    pub components: usize,
    /// Hard-region margin, as a fraction of the benign box diagonal.
    pub margin: f64,
    /// Feature count used by the SNN and the per-checkpoint evaluation.
    pub top_k: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            components: 2,
            margin: 0.05,
            top_k: 19,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub split: SplitName,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { split: SplitName::Test }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    /// Comma-separated feature counts; `all` means every column.
    pub ks: String,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            ks: "1,2,3,5,10,19,all".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputOptions {
    /// Write SVG scatter plots next to the CSV reports.
    pub svg: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self { svg: true }
    }
}

impl WorkbenchConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new("io", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message)))
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e: toml::de::Error| CliError::config(e.message().trim().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.campaign.validate().map_err(|e| CliError::config(e.to_string()))?;
        let r = self.dataset.preprocess.ratios;
        if r.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CliError::config(format!("split ratios must be non-negative and sum to 1, got {r:?}")));
        }
        let t = self.dataset.preprocess.nan_threshold;
        if !(0.0..=1.0).contains(&t) {
            return Err(CliError::config(format!("nan_threshold must be in [0, 1], got {t}")));
        }
        let a = &self.analysis;
        if a.components < 2 {
            return Err(CliError::config("analysis.components must be at least 2"));
        }
        if !(a.margin.is_finite() && a.margin >= 0.0) {
            return Err(CliError::config(format!("analysis.margin must be >= 0, got {}", a.margin)));
        }
        if a.top_k == 0 {
            return Err(CliError::config("analysis.top_k must be at least 1"));
        }
        let m = &self.models;
        for t in [&m.mlp.train, &m.lstm.train, &m.snn.train] {
            t.validate().map_err(|e| CliError::config(e.to_string()))?;
        }
        m.snn.lif.validate().map_err(|e| CliError::config(e.to_string()))?;
        parse_ks(&self.sweep.ks, usize::MAX)?;
        Ok(())
    }
}

/// Parses `"1,2,5,all"` against a dataset of `width` columns. Counts above
/// `width` are dropped; the result is ascending and deduplicated.
pub fn parse_ks(spec: &str, width: usize) -> Result<Vec<usize>, CliError> {
    let mut ks = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let k = if part == "all" {
            width
        } else {
            part.parse::<usize>()
                .map_err(|_| CliError::config(format!("bad feature count `{part}` in `{spec}`")))?
        };
        if k == 0 {
            return Err(CliError::config("feature counts must be positive"));
        }
        if k <= width {
            ks.push(k);
        }
    }
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(CliError::config(format!("no usable feature counts in `{spec}`")));
    }
    Ok(ks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = WorkbenchConfig::default();
        let back = WorkbenchConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_files_and_unknown_keys() {
        let cfg = WorkbenchConfig::from_toml("[campaign]\nn_runs = 12\ncheckpoints = { every = 500 }\n").unwrap();
        assert_eq!(cfg.campaign.n_runs, 12);
        assert_eq!(cfg.analysis, AnalysisOptions::default());
        let err = WorkbenchConfig::from_toml("[analysis]\ntopk = 3\n").unwrap_err();
        assert_eq!(err.kind, "config");
        assert!(err.message.contains("topk"), "{}", err.message);
    }

    #[test]
    fn validation() {
        let mut cfg = WorkbenchConfig::default();
        cfg.analysis.margin = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = WorkbenchConfig::default();
        cfg.campaign.budget_factor = 0.5;
        assert!(cfg.validate().is_err());
        let mut cfg = WorkbenchConfig::default();
        cfg.sweep.ks = "1,x".into();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ks() {
        assert_eq!(parse_ks("5,1,all,2,5", 7).unwrap(), vec![1, 2, 5, 7]);
        assert_eq!(parse_ks("1,19,all", 10).unwrap(), vec![1, 10]);
        assert!(parse_ks("0", 3).is_err());
        assert!(parse_ks("9", 3).is_err());
    }
}
