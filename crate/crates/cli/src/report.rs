//! Markdown summary of a pipeline run, with the published reference values
//! shown next to ours. The reference numbers come from a gem5/x86 stack and
//! are not expected to match.

use std::fmt::Write as _;

use pmufault::injector::OutcomeCounts;
use pmufault::models::{CheckpointEval, Metrics};
use serde::{Deserialize, Serialize};

use crate::commands::PcaSummary;

/// Published detector metrics in whole percent: accuracy, precision, recall, F1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceRow {
    pub setting: Setting,
    /// Upper-case benchmark label as published (`QSORT`, `MATH`, `BITCOUNT`).
    pub benchmark: &'static str,
    pub architecture: &'static str,
    pub values: [u32; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    MlpCumulative,
    MlpTemporal,
    LstmTemporal,
    SnnCumulative,
}

impl Setting {
    pub fn label(self) -> &'static str {
        match self {
            Setting::MlpCumulative => "FC-FFNN, cumulative, all features",
            Setting::MlpTemporal => "FC-FFNN, temporal, all features",
            Setting::LstmTemporal => "LSTM, temporal, all features",
            Setting::SnnCumulative => "SNN, cumulative, top features",
        }
    }
}

pub const REFERENCE: &[ReferenceRow] = &[
    ReferenceRow { setting: Setting::MlpCumulative, benchmark: "QSORT", architecture: "366-32-2", values: [92, 100, 67, 81] },
    ReferenceRow { setting: Setting::MlpCumulative, benchmark: "MATH", architecture: "358-32-2", values: [97, 100, 50, 67] },
    ReferenceRow { setting: Setting::MlpCumulative, benchmark: "BITCOUNT", architecture: "360-32-2", values: [91, 100, 46, 63] },
    ReferenceRow { setting: Setting::MlpTemporal, benchmark: "QSORT", architecture: "3660-32-2", values: [92, 100, 70, 82] },
    ReferenceRow { setting: Setting::MlpTemporal, benchmark: "MATH", architecture: "3580-32-2", values: [96, 100, 44, 61] },
    ReferenceRow { setting: Setting::MlpTemporal, benchmark: "BITCOUNT", architecture: "3600-32-2", values: [91, 100, 43, 61] },
    ReferenceRow { setting: Setting::LstmTemporal, benchmark: "QSORT", architecture: "366-32-2", values: [92, 97, 71, 82] },
    ReferenceRow { setting: Setting::LstmTemporal, benchmark: "MATH", architecture: "358-32-2", values: [96, 100, 42, 59] },
    ReferenceRow { setting: Setting::LstmTemporal, benchmark: "BITCOUNT", architecture: "360-32-2", values: [91, 100, 41, 58] },
    ReferenceRow { setting: Setting::SnnCumulative, benchmark: "QSORT", architecture: "366-32-2", values: [87, 100, 51, 68] },
    ReferenceRow { setting: Setting::SnnCumulative, benchmark: "MATH", architecture: "358-32-2", values: [96, 99, 40, 56] },
    ReferenceRow { setting: Setting::SnnCumulative, benchmark: "BITCOUNT", architecture: "360-32-2", values: [90, 100, 35, 52] },
];

/// Published per-checkpoint rows for qsort (19 top features, 19-32-2).
pub const REFERENCE_CHECKPOINTS: [[u32; 4]; 10] = [
    [86, 100, 48, 65],
    [96, 100, 36, 53],
    [89, 100, 32, 48],
    [86, 100, 48, 65],
    [96, 100, 36, 53],
    [89, 100, 32, 48],
    [86, 100, 48, 65],
    [96, 100, 36, 53],
    [89, 100, 32, 48],
    [86, 100, 48, 65],
];

/// Published outcome profile: about 0.5% crashes; of the rest about 75% benign.
pub const REFERENCE_CRASH_FRACTION: f64 = 0.005;
pub const REFERENCE_BENIGN_OF_NON_CRASH: f64 = 0.75;

pub fn reference_label(benchmark: &str) -> &'static str {
    match benchmark {
        "qsort" => "QSORT",
        "basicmath_fx" => "MATH",
        _ => "BITCOUNT",
    }
}

pub fn reference_row(setting: Setting, benchmark: &str) -> Option<&'static ReferenceRow> {
    let label = reference_label(benchmark);
    REFERENCE.iter().find(|r| r.setting == setting && r.benchmark == label)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardRegionSummary {
    pub margin: f64,
    pub faulty_inside: usize,
    pub faulty_total: usize,
    pub overlap_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub setting: Setting,
    pub architecture: String,
    pub features: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopFeature {
    pub feature: String,
    pub class: String,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub benchmark: String,
    pub runs: usize,
    pub golden_ticks: u64,
    pub counts: OutcomeCounts,
    pub raw_rows: usize,
    pub raw_features: usize,
    pub kept_features: usize,
    pub temporal_raw_width: usize,
    pub temporal_kept_features: usize,
    pub checkpoints: usize,
    /// Test-split accuracy of always predicting the majority class.
    pub majority_baseline: f64,
    pub pca: PcaSummary,
    pub hard_region: HardRegionSummary,
    pub temporal_hard_region: HardRegionSummary,
    pub top_features: Vec<TopFeature>,
    pub models: Vec<ModelResult>,
    pub top_k: usize,
    pub per_checkpoint: Vec<CheckpointEval>,
    pub sweep: Vec<SweepPoint>,
}

impl BenchReport {
    pub fn model(&self, setting: Setting) -> Option<&ModelResult> {
        self.models.iter().find(|m| m.setting == setting)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub tool_version: String,
    pub seed: u64,
    pub split: String,
    pub benchmarks: Vec<BenchReport>,
}

fn pct(v: f64) -> String {
    format!("{:.1}%", 100.0 * v)
}

fn opt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), pct)
}

fn delta(a: Option<f64>, b: Option<f64>) -> String {
    match (a, b) {
        (Some(a), Some(b)) => format!("{:+.1}", 100.0 * (a - b)),
        _ => "undefined".into(),
    }
}

fn metric_cells(m: &Metrics) -> String {
    format!(
        "{} | {} | {} | {}",
        pct(m.accuracy),
        opt_pct(m.precision),
        opt_pct(m.recall),
        opt_pct(m.f1)
    )
}

fn reference_cells(v: [u32; 4]) -> String {
    format!("{}/{}/{}/{}", v[0], v[1], v[2], v[3])
}

fn values(m: &Metrics) -> [Option<f64>; 4] {
    [Some(m.accuracy), m.precision, m.recall, m.f1]
}

pub fn render_markdown(report: &PipelineReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Soft-error detection report\n");
    let _ = writeln!(
        s,
        "pmufault {}, master seed {}, metrics on the `{}` split. Reference columns list published \
         results from a full-system gem5/x86 setup in percent (accuracy/precision/recall/F1). They are \
         context for the comparison, not targets.\n",
        report.tool_version, report.seed, report.split
    );

    let _ = writeln!(s, "## Overview\n");
    let _ = writeln!(s, "| Benchmark | Runs | Crash | Faulty | Benign | Benign of non-crash | Hard-region overlap | Faulty/benign dispersion | MLP accuracy | Majority baseline |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|---|");
    for b in &report.benchmarks {
        let c = &b.counts;
        let non_crash = c.faulty + c.benign;
        let ratio = match (b.pca.dispersion_faulty, b.pca.dispersion_benign) {
            (Some(f), Some(d)) if d > 0.0 => format!("{:.2}", f / d),
            _ => "undefined".into(),
        };
        let mlp = b.model(Setting::MlpCumulative).map_or_else(|| "n/a".into(), |m| pct(m.metrics.accuracy));
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            b.benchmark,
            b.runs,
            pct(c.fraction(pmufault::injector::Outcome::Crash)),
            pct(c.fraction(pmufault::injector::Outcome::Faulty)),
            pct(c.fraction(pmufault::injector::Outcome::Benign)),
            if non_crash == 0 { "undefined".into() } else { pct(c.benign as f64 / non_crash as f64) },
            pct(b.hard_region.overlap_fraction),
            ratio,
            mlp,
            pct(b.majority_baseline),
        );
    }
    let _ = writeln!(
        s,
        "\nReference outcome profile: about {} crashes, about {} of the remaining runs benign.\n",
        pct(REFERENCE_CRASH_FRACTION),
        pct(REFERENCE_BENIGN_OF_NON_CRASH)
    );

    for b in &report.benchmarks {
        render_bench(&mut s, b);
    }
    s
}

fn render_bench(s: &mut String, b: &BenchReport) {
    let c = &b.counts;
    let _ = writeln!(s, "## {}\n", b.benchmark);
    let _ = writeln!(
        s,
        "Golden run: {} ticks. Campaign: {} runs, {} crash, {} faulty, {} benign.\n",
        b.golden_ticks, b.runs, c.crash, c.faulty, c.benign
    );
    let _ = writeln!(
        s,
        "Datasets: cumulative {} rows x {} features, {} kept after cleaning; temporal {} columns over {} checkpoints, {} kept.\n",
        b.raw_rows, b.raw_features, b.kept_features, b.temporal_raw_width, b.checkpoints, b.temporal_kept_features
    );

    let _ = writeln!(s, "### Projection\n");
    let ev = &b.pca.explained_ratio;
    let _ = writeln!(
        s,
        "PC1 and PC2 explain {} and {} of the variance{}.",
        ev.first().map_or_else(|| "n/a".into(), |v| pct(*v)),
        ev.get(1).map_or_else(|| "n/a".into(), |v| pct(*v)),
        if b.pca.degenerate { " (degenerate spectrum)" } else { "" }
    );
    match (b.pca.dispersion_benign, b.pca.dispersion_faulty) {
        (Some(d0), Some(d1)) => {
            let verdict = if d1 > d0 { "faulty runs are more dispersed" } else { "faulty runs are not more dispersed" };
            let _ = writeln!(s, "Mean distance to the class centroid: benign {d0:.3}, faulty {d1:.3}; {verdict}.");
        }
        _ => {
            let _ = writeln!(s, "Dispersion is undefined (a class is empty).");
        }
    }
    for (name, h) in [("Cumulative", &b.hard_region), ("Temporal", &b.temporal_hard_region)] {
        let _ = writeln!(
            s,
            "{name} hard-to-detect region (benign box grown by {} of its diagonal): {} of {} faulty runs inside ({}).",
            pct(h.margin),
            h.faulty_inside,
            h.faulty_total,
            pct(h.overlap_fraction)
        );
    }
    let _ = writeln!(s, "\nMost correlated counters (training split):\n");
    let _ = writeln!(s, "| Feature | Class | r |");
    let _ = writeln!(s, "|---|---|---|");
    for f in b.top_features.iter().take(10) {
        let _ = writeln!(s, "| {} | {} | {:+.3} |", f.feature, f.class, f.r);
    }

    let _ = writeln!(s, "\n### Detectors\n");
    let _ = writeln!(s, "| Setting | Architecture | Features | Accuracy | Precision | Recall | F1 | Reference |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
    for m in &b.models {
        let reference = reference_row(m.setting, &b.benchmark)
            .map_or_else(|| "n/a".into(), |r| format!("{} ({})", reference_cells(r.values), r.architecture));
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} |",
            m.setting.label(),
            m.architecture,
            m.features,
            metric_cells(&m.metrics),
            reference
        );
    }
    let _ = writeln!(s, "\nMajority-class baseline accuracy: {}.\n", pct(b.majority_baseline));

    if let Some(base) = b.model(Setting::MlpCumulative) {
        let _ = writeln!(s, "Temporal minus cumulative, in percentage points:\n");
        let _ = writeln!(s, "| Comparison | Accuracy | Precision | Recall | F1 |");
        let _ = writeln!(s, "|---|---|---|---|---|");
        for (name, setting) in [("FC-FFNN temporal", Setting::MlpTemporal), ("LSTM temporal", Setting::LstmTemporal)] {
            if let Some(m) = b.model(setting) {
                let (x, y) = (values(&m.metrics), values(&base.metrics));
                let cells: Vec<String> = x.iter().zip(&y).map(|(a, b)| delta(*a, *b)).collect();
                let _ = writeln!(s, "| {name} vs FC-FFNN cumulative | {} |", cells.join(" | "));
            }
        }
        let _ = writeln!(s);
    }

    let _ = writeln!(s, "### Early detection\n");
    let _ = writeln!(
        s,
        "FC-FFNN trained on the top {} cumulative features, evaluated on the counters of each checkpoint.\n",
        b.top_k
    );
    let qsort = b.benchmark == "qsort";
    let _ = writeln!(
        s,
        "| Checkpoint | Mean tick | Accuracy | Precision | Recall | F1 |{}",
        if qsort { " Reference |" } else { "" }
    );
    let _ = writeln!(s, "|---|---|---|---|---|---|{}", if qsort { "---|" } else { "" });
    for r in &b.per_checkpoint {
        let reference = match REFERENCE_CHECKPOINTS.get(r.checkpoint) {
            Some(v) if qsort => format!(" {} |", reference_cells(*v)),
            _ => String::new(),
        };
        let _ = writeln!(s, "| {} | {:.0} | {} |{reference}", r.checkpoint, r.mean_tick, metric_cells(&r.metrics));
    }

    let _ = writeln!(s, "\n### Feature sweep\n");
    let _ = writeln!(s, "| Top k | Accuracy | Precision | Recall | F1 |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    for p in &b.sweep {
        let _ = writeln!(s, "| {} | {} |", p.k, metric_cells(&p.metrics));
    }
    let _ = writeln!(s);
}
