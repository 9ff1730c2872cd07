//! Stage implementations. Each takes already-loaded inputs, writes its
//! artifacts into an output directory and returns what it computed, so the
//! pipeline can chain stages without re-reading files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pmufault::analysis::{
    class_dispersion, hard_region, pca_fit, scatter_svg, write_class_summary_csv, write_components_csv,
    write_projection_csv, write_ranking_csv, CorrelationReport, HardRegionReport, PcaModel,
};
use pmufault::dataset::{
    preprocess, save_dataset, split_temporal_name, Dataset, FeatureMode, PreprocessConfig,
    RawDataset, SplitName,
};
use pmufault::injector::{run_campaign, save_campaign, CampaignResult, OutcomeCounts};
use pmufault::io::{write_json, write_text};
use pmufault::models::{
    evaluate, feature_count_sweep, per_checkpoint_eval, rank_features, top_k_features, train, write_metrics_csv,
    CheckpointEval, Metrics, MetricsRow, ModelKind, SweepRow, TrainedModel,
};
use pmufault::Execution;
use serde::{Deserialize, Serialize};

use crate::config::{parse_ks, ModeName, WorkbenchConfig};
use crate::error::CliError;

pub type CliResult<T> = Result<T, CliError>;

pub const OUTPUT_FORMAT: &str = "pmufault-output";

/// Written into every directory the CLI produces. Campaign and dataset
/// directories already hold a `manifest.json` of their own, so there it is
/// named `command.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputManifest {
    pub format: String,
    pub format_version: u32,
    pub tool_version: String,
    pub command: String,
    pub inputs: BTreeMap<String, String>,
    pub config: WorkbenchConfig,
    pub files: Vec<String>,
}

pub fn write_manifest(
    dir: &Path,
    file: &str,
    command: &str,
    inputs: &[(&str, String)],
    config: &WorkbenchConfig,
    files: &[&str],
) -> CliResult<()> {
    let m = OutputManifest {
        format: OUTPUT_FORMAT.into(),
        format_version: 1,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        inputs: inputs.iter().map(|(k, v)| ((*k).to_string(), v.clone())).collect(),
        config: config.clone(),
        files: files.iter().map(|f| (*f).to_string()).collect(),
    };
    write_json(&dir.join(file), &m)?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::new("io", format!("cannot create {}: {e}", dir.display())))
}

pub fn campaign(config: &WorkbenchConfig, out: &Path, exec: Execution) -> CliResult<CampaignResult> {
    let result = run_campaign(&config.campaign, exec)?;
    save_campaign(&result, out)?;
    write_manifest(
        out,
        "command.json",
        "campaign",
        &[],
        config,
        &["manifest.json", "golden_checkpoint.bin", "golden_stats.csv", "records.csv", "stats.csv"],
    )?;
    Ok(result)
}

pub fn feature_mode(mode: ModeName, campaign: &CampaignResult) -> FeatureMode {
    match mode {
        ModeName::Cumulative => FeatureMode::Cumulative,
        ModeName::Temporal => FeatureMode::Temporal {
            checkpoints: campaign.checkpoint_count(),
        },
    }
}

pub struct BuiltDataset {
    pub mode: FeatureMode,
    pub raw: RawDataset,
    pub dataset: Dataset,
}

pub fn build_dataset(campaign: &CampaignResult, mode: ModeName, cfg: &PreprocessConfig) -> CliResult<BuiltDataset> {
    let mode = feature_mode(mode, campaign);
    let raw = RawDataset::from_campaign(campaign, mode)?;
    let dataset = preprocess(&raw, cfg)?;
    Ok(BuiltDataset { mode, raw, dataset })
}

pub fn dataset(
    config: &WorkbenchConfig,
    campaign: &CampaignResult,
    source: &str,
    mode: ModeName,
    out: &Path,
) -> CliResult<BuiltDataset> {
    let built = build_dataset(campaign, mode, &config.dataset.preprocess)?;
    save_dataset(
        out,
        &built.raw,
        &built.dataset,
        built.mode,
        &config.dataset.preprocess,
        Some(source.to_string()),
    )?;
    write_manifest(
        out,
        "command.json",
        "dataset",
        &[("campaign", source.to_string()), ("mode", built.mode.describe())],
        config,
        &["manifest.json", "raw.csv", "dataset.csv"],
    )?;
    Ok(built)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AnalysisKind {
    Pca,
    Corr,
    Hard,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub rows: usize,
    pub features: usize,
    pub eigenvalues: Vec<f64>,
    pub explained_ratio: Vec<f64>,
    /// Some kept component has a numerically zero eigenvalue.
    pub degenerate: bool,
    /// Mean distance to the class centroid in the PC1/PC2 plane.
    pub dispersion_benign: Option<f64>,
    pub dispersion_faulty: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct AnalysisOutput {
    pub pca: Option<PcaSummary>,
    pub correlation: Option<CorrelationReport>,
    pub hard_region: Option<HardRegionReport>,
}

fn plane(points: &[Vec<f64>]) -> Vec<[f64; 2]> {
    points.iter().map(|p| [p[0], p[1]]).collect()
}

fn pca_view(dataset: &Dataset, components: usize) -> CliResult<(PcaModel, Vec<Vec<f64>>)> {
    let k = components.min(dataset.width());
    if k < 2 {
        return Err(CliError::new(
            "analysis",
            format!("a 2-D view needs at least 2 features, dataset has {}", dataset.width()),
        ));
    }
    let model = pca_fit(&dataset.rows, k)?;
    let points = model.project(&dataset.rows);
    Ok((model, points))
}

pub fn analyze(
    config: &WorkbenchConfig,
    dataset: &Dataset,
    source: &str,
    kind: AnalysisKind,
    title: &str,
    out: &Path,
) -> CliResult<AnalysisOutput> {
    ensure_dir(out)?;
    let opts = &config.analysis;
    let svg = config.output.svg;
    let mut files: Vec<&str> = Vec::new();
    let mut result = AnalysisOutput::default();
    let want = |k: AnalysisKind| kind == k || kind == AnalysisKind::All;

    if want(AnalysisKind::Pca) || want(AnalysisKind::Hard) {
        let (model, points) = pca_view(dataset, opts.components)?;
        let xy = plane(&points);
        if want(AnalysisKind::Pca) {
            write_projection_csv(&out.join("pca_projection.csv"), &dataset.runs, &dataset.labels, &points)?;
            write_components_csv(&out.join("pca_components.csv"), &model, &dataset.feature_names)?;
            let [b, f] = class_dispersion(&xy, &dataset.labels);
            let summary = PcaSummary {
                rows: dataset.len(),
                features: dataset.width(),
                eigenvalues: model.eigenvalues.clone(),
                explained_ratio: model.explained_ratio(),
                degenerate: model.degenerate.iter().any(|&d| d),
                dispersion_benign: b,
                dispersion_faulty: f,
            };
            write_json(&out.join("pca.json"), &summary)?;
            files.extend(["pca_projection.csv", "pca_components.csv", "pca.json"]);
            if svg {
                write_text(&out.join("pca.svg"), &scatter_svg(&xy, &dataset.labels, None, &format!("{title} PCA")))?;
                files.push("pca.svg");
            }
            result.pca = Some(summary);
        }
        if want(AnalysisKind::Hard) {
            let report = hard_region(&xy, &dataset.labels, opts.margin)?;
            write_json(&out.join("hard_region.json"), &report)?;
            files.push("hard_region.json");
            if svg {
                let t = format!("{title} hard-to-detect region");
                write_text(&out.join("hard_region.svg"), &scatter_svg(&xy, &dataset.labels, Some(&report.region), &t))?;
                files.push("hard_region.svg");
            }
            result.hard_region = Some(report);
        }
    }
    if want(AnalysisKind::Corr) {
        let report = rank_features(dataset);
        write_ranking_csv(&out.join("correlation_ranking.csv"), &report)?;
        write_class_summary_csv(&out.join("correlation_classes.csv"), &report)?;
        let k = opts.top_k.min(report.ranking.len());
        let top = top_k_features(dataset, &report, k)?;
        write_json(&out.join("top_features.json"), &top)?;
        files.extend(["correlation_ranking.csv", "correlation_classes.csv", "top_features.json"]);
        result.correlation = Some(report);
    }
    files.push("manifest.json");
    let what = format!("{kind:?}").to_lowercase();
    write_manifest(out, "manifest.json", "analyze", &[("dataset", source.to_string()), ("analysis", what)], config, &files)?;
    Ok(result)
}

/// How many input features a model trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureCount {
    All,
    Top(usize),
}

impl std::str::FromStr for FeatureCount {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(FeatureCount::All);
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("expected a positive count or `all`, got `{s}`")),
            Ok(k) => Ok(FeatureCount::Top(k)),
        }
    }
}

impl std::fmt::Display for FeatureCount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureCount::All => f.write_str("all"),
            FeatureCount::Top(k) => write!(f, "{k}"),
        }
    }
}

/// The SNN defaults to the configured top-k; the other models use every column.
pub fn default_feature_count(kind: ModelKind, config: &WorkbenchConfig) -> FeatureCount {
    match kind {
        ModelKind::Snn => FeatureCount::Top(config.analysis.top_k),
        _ => FeatureCount::All,
    }
}

/// Resolves a feature count to column names. On temporal data the ranking is
/// taken at the last checkpoint and every checkpoint of the chosen counters
/// is kept, so sequences stay rectangular.
pub fn select_features(dataset: &Dataset, count: FeatureCount) -> CliResult<Option<Vec<String>>> {
    let FeatureCount::Top(k) = count else {
        return Ok(None);
    };
    let ranking = rank_features(dataset);
    let last = dataset
        .feature_names
        .iter()
        .filter_map(|n| split_temporal_name(n).1)
        .max();
    let Some(last) = last else {
        return Ok(Some(top_k_features(dataset, &ranking, k)?));
    };
    let bases: Vec<&str> = ranking
        .ranking
        .iter()
        .filter_map(|f| match split_temporal_name(&f.feature) {
            (base, Some(cp)) if cp == last => Some(base),
            _ => None,
        })
        .collect();
    if k > bases.len() {
        return Err(CliError::new(
            "analysis",
            format!("asked for the top {k} counters, only {} are ranked at the last checkpoint", bases.len()),
        ));
    }
    let chosen = &bases[..k];
    let names = dataset
        .feature_names
        .iter()
        .filter(|n| {
            let (base, cp) = split_temporal_name(n);
            cp.is_some() && chosen.contains(&base)
        })
        .cloned()
        .collect();
    Ok(Some(names))
}

fn metrics_rows(model: &TrainedModel, dataset: &Dataset) -> CliResult<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for split in [SplitName::Train, SplitName::Val, SplitName::Test] {
        if dataset.splits.get(split).is_empty() {
            continue;
        }
        rows.push(MetricsRow {
            keys: vec![("split".into(), split.to_string())],
            architecture: model.architecture.clone(),
            metrics: evaluate(model, dataset, split)?,
        });
    }
    Ok(rows)
}

fn write_history(path: &Path, model: &TrainedModel) -> CliResult<()> {
    let h = &model.history;
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for (i, (t, v)) in h.train_loss.iter().zip(&h.val_loss).enumerate() {
        s.push_str(&format!("{i},{t:e},{v:e}\n"));
    }
    write_text(path, &s)?;
    Ok(())
}

pub struct TrainOutput {
    pub model: TrainedModel,
    pub metrics: Vec<MetricsRow>,
}

pub fn train_model(
    config: &WorkbenchConfig,
    dataset: &Dataset,
    source: &str,
    kind: ModelKind,
    count: FeatureCount,
    out: &Path,
) -> CliResult<TrainOutput> {
    ensure_dir(out)?;
    let features = select_features(dataset, count)?;
    let model = train(kind, dataset, features.as_deref(), &config.models)?;
    model.save(&out.join("model.json"))?;
    let metrics = metrics_rows(&model, dataset)?;
    write_metrics_csv(&out.join("metrics.csv"), &metrics)?;
    write_history(&out.join("history.csv"), &model)?;
    write_manifest(
        out,
        "manifest.json",
        "train",
        &[
            ("dataset", source.to_string()),
            ("model", kind.to_string()),
            ("top_k", count.to_string()),
        ],
        config,
        &["model.json", "metrics.csv", "history.csv", "manifest.json"],
    )?;
    Ok(TrainOutput { model, metrics })
}

pub struct EvalOutput {
    pub metrics: Metrics,
    pub per_checkpoint: Option<Vec<CheckpointEval>>,
}

pub fn checkpoint_rows(model: &TrainedModel, rows: &[CheckpointEval]) -> Vec<MetricsRow> {
    rows.iter()
        .map(|r| MetricsRow {
            keys: vec![
                ("checkpoint".into(), r.checkpoint.to_string()),
                ("mean_tick".into(), format!("{:.1}", r.mean_tick)),
            ],
            architecture: model.architecture.clone(),
            metrics: r.metrics,
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    config: &WorkbenchConfig,
    model: &TrainedModel,
    dataset: &Dataset,
    campaign: Option<&CampaignResult>,
    inputs: &[(&str, String)],
    split: SplitName,
    out: &Path,
) -> CliResult<EvalOutput> {
    ensure_dir(out)?;
    let metrics = evaluate(model, dataset, split)?;
    let row = MetricsRow {
        keys: vec![("split".into(), split.to_string())],
        architecture: model.architecture.clone(),
        metrics,
    };
    write_metrics_csv(&out.join("metrics.csv"), &[row])?;
    let mut files = vec!["metrics.csv"];
    let per_checkpoint = match campaign {
        Some(c) => {
            let rows = per_checkpoint_eval(model, dataset, c, split)?;
            write_metrics_csv(&out.join("per_checkpoint.csv"), &checkpoint_rows(model, &rows))?;
            files.push("per_checkpoint.csv");
            Some(rows)
        }
        None => None,
    };
    files.push("manifest.json");
    let mut inputs = inputs.to_vec();
    inputs.push(("split", split.to_string()));
    write_manifest(out, "manifest.json", "eval", &inputs, config, &files)?;
    Ok(EvalOutput { metrics, per_checkpoint })
}

pub fn sweep(
    config: &WorkbenchConfig,
    dataset: &Dataset,
    source: &str,
    ks: &str,
    split: SplitName,
    exec: Execution,
    out: &Path,
) -> CliResult<Vec<SweepRow>> {
    ensure_dir(out)?;
    let defined = rank_features(dataset).ranking.len();
    let ks = parse_ks(ks, defined)?;
    let rows = feature_count_sweep(dataset, &ks, &config.models.mlp, split, exec)?;
    let table: Vec<MetricsRow> = rows
        .iter()
        .map(|r| MetricsRow {
            keys: vec![("k".into(), r.k.to_string())],
            architecture: r.architecture.clone(),
            metrics: r.metrics,
        })
        .collect();
    write_metrics_csv(&out.join("sweep.csv"), &table)?;
    let features: BTreeMap<String, &Vec<String>> = rows.iter().map(|r| (format!("{:06}", r.k), &r.features)).collect();
    write_json(&out.join("sweep_features.json"), &features)?;
    let ks_text = ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",");
    write_manifest(
        out,
        "manifest.json",
        "sweep",
        &[("dataset", source.to_string()), ("ks", ks_text), ("split", split.to_string())],
        config,
        &["sweep.csv", "sweep_features.json", "manifest.json"],
    )?;
    Ok(rows)
}

pub fn display_path(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

pub fn resolve(workspace: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        workspace.join(p)
    }
}

pub fn counts_json(c: &OutcomeCounts) -> serde_json::Value {
    serde_json::json!({ "crash": c.crash, "faulty": c.faulty, "benign": c.benign })
}
