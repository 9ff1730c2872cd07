use std::path::Path;

use pmufault::benchmarks::BenchmarkName;
use pmufault::io::{write_json, write_text};
use pmufault::models::ModelKind;
use pmufault::Execution;

use crate::commands::{
    self, default_feature_count, AnalysisKind, CliResult, FeatureCount,
};
use crate::config::{ModeName, WorkbenchConfig};
use crate::report::{
    render_markdown, BenchReport, HardRegionSummary, ModelResult, PipelineReport, Setting, SweepPoint, TopFeature,
};

fn hard(h: &pmufault::analysis::HardRegionReport) -> HardRegionSummary {
    HardRegionSummary {
        margin: h.margin,
        faulty_inside: h.faulty_inside.len(),
        faulty_total: h.faulty_total,
        overlap_fraction: h.overlap_fraction,
    }
}

/// Every stage for one benchmark, artifacts under `out/<benchmark>/`.
/// `label` is how `out` is written in manifests.
pub fn run_benchmark(
    config: &WorkbenchConfig,
    bench: BenchmarkName,
    out: &Path,
    label: &str,
    exec: Execution,
) -> CliResult<BenchReport> {
    let mut cfg = config.clone();
    cfg.campaign.benchmark = bench;
    let dir = out.join(bench.as_str());
    let split = cfg.eval.split;
    let src = |name: &str| format!("{label}/{}/{name}", bench.as_str());

    let campaign = commands::campaign(&cfg, &dir.join("campaign"), exec)?;
    let cum = commands::dataset(&cfg, &campaign, &src("campaign"), ModeName::Cumulative, &dir.join("dataset_cumulative"))?;
    let tmp = commands::dataset(&cfg, &campaign, &src("campaign"), ModeName::Temporal, &dir.join("dataset_temporal"))?;
    let (cum_src, tmp_src) = (src("dataset_cumulative"), src("dataset_temporal"));

    let analysis = commands::analyze(&cfg, &cum.dataset, &cum_src, AnalysisKind::All, bench.as_str(), &dir.join("analysis_cumulative"))?;
    let t_title = format!("{} temporal", bench.as_str());
    let t_analysis = commands::analyze(&cfg, &tmp.dataset, &tmp_src, AnalysisKind::Hard, &t_title, &dir.join("analysis_temporal"))?;

    let mut models = Vec::new();
    let runs: [(Setting, ModelKind, &commands::BuiltDataset, &str, &str); 4] = [
        (Setting::MlpCumulative, ModelKind::Mlp, &cum, &cum_src, "mlp_cumulative"),
        (Setting::MlpTemporal, ModelKind::Mlp, &tmp, &tmp_src, "mlp_temporal"),
        (Setting::LstmTemporal, ModelKind::Lstm, &tmp, &tmp_src, "lstm_temporal"),
        (Setting::SnnCumulative, ModelKind::Snn, &cum, &cum_src, "snn_cumulative"),
    ];
    for (setting, kind, data, source, name) in runs {
        let count = default_feature_count(kind, &cfg);
        let t = commands::train_model(&cfg, &data.dataset, source, kind, count, &dir.join(name))?;
        models.push(ModelResult {
            setting,
            architecture: t.model.architecture.clone(),
            features: t.model.features.len(),
            metrics: pmufault::models::evaluate(&t.model, &data.dataset, split)?,
        });
    }

    let top_k = cfg.analysis.top_k;
    let early = commands::train_model(&cfg, &cum.dataset, &cum_src, ModelKind::Mlp, FeatureCount::Top(top_k), &dir.join("mlp_top"))?;
    let inputs = [
        ("model", src("mlp_top/model.json")),
        ("dataset", cum_src.clone()),
        ("campaign", src("campaign")),
    ];
    let eval = commands::eval(&cfg, &early.model, &cum.dataset, Some(&campaign), &inputs, split, &dir.join("eval_per_checkpoint"))?;

    let sweep = commands::sweep(&cfg, &cum.dataset, &cum_src, &cfg.sweep.ks, split, exec, &dir.join("sweep"))?;

    let correlation = analysis.correlation.expect("analysis ran the correlation step");
    Ok(BenchReport {
        benchmark: bench.as_str().into(),
        runs: campaign.records.len(),
        golden_ticks: campaign.golden.ticks(),
        counts: campaign.counts(),
        raw_rows: cum.raw.len(),
        raw_features: cum.raw.width(),
        kept_features: cum.dataset.width(),
        temporal_raw_width: tmp.raw.width(),
        temporal_kept_features: tmp.dataset.width(),
        checkpoints: campaign.checkpoint_count(),
        majority_baseline: cum.dataset.majority_baseline(split),
        pca: analysis.pca.expect("analysis ran the PCA step"),
        hard_region: hard(analysis.hard_region.as_ref().expect("analysis ran the hard-region step")),
        temporal_hard_region: hard(t_analysis.hard_region.as_ref().expect("hard-region step ran")),
        top_features: correlation
            .ranking
            .iter()
            .take(top_k)
            .map(|f| TopFeature {
                feature: f.feature.clone(),
                class: f.class.clone(),
                r: f.r,
            })
            .collect(),
        models,
        top_k,
        per_checkpoint: eval.per_checkpoint.unwrap_or_default(),
        sweep: sweep
            .into_iter()
            .map(|r| SweepPoint {
                k: r.k,
                metrics: r.metrics,
            })
            .collect(),
    })
}

/// Runs every benchmark in `benches` and writes `report.md`, `report.json`
/// and `manifest.json` into `out`.
pub fn run(
    config: &WorkbenchConfig,
    benches: &[BenchmarkName],
    out: &Path,
    label: &str,
    exec: Execution,
) -> CliResult<PipelineReport> {
    let mut reports = Vec::with_capacity(benches.len());
    for &b in benches {
        reports.push(run_benchmark(config, b, out, label, exec)?);
    }
    let report = PipelineReport {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed: config.campaign.seed,
        split: config.eval.split.to_string(),
        benchmarks: reports,
    };
    write_json(&out.join("report.json"), &report)?;
    write_text(&out.join("report.md"), &render_markdown(&report))?;
    let names = benches.iter().map(|b| b.as_str()).collect::<Vec<_>>().join(",");
    commands::write_manifest(
        out,
        "manifest.json",
        "pipeline",
        &[("benchmarks", names)],
        config,
        &["report.md", "report.json", "manifest.json"],
    )?;
    Ok(report)
}
