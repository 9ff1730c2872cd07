use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pmufault::asm::{assemble, disassemble};
use pmufault::benchmarks::BenchmarkName;
use pmufault::dataset::{load_dataset, SplitName};
use pmufault::injector::load_campaign;
use pmufault::io::{read_text, write_text};
use pmufault::models::{ModelKind, TrainedModel};
use pmufault::sim::{counter_catalog, CheckpointSchedule};
use pmufault::Execution;
use serde_json::json;

use crate::commands::{self, counts_json, display_path, resolve, AnalysisKind, CliResult, FeatureCount};
use crate::config::{ModeName, WorkbenchConfig};
use crate::error::CliError;
use crate::pipeline;

#[derive(Debug, Parser)]
#[command(name = "pmufault", version, about = "Soft-error detection workbench on hardware performance counters")]
pub struct Cli {
    /// Directory that relative paths are resolved against.
    #[arg(short = 'C', long, global = true, default_value = ".")]
    pub workspace: PathBuf,
    /// TOML configuration file (see `pmufault config`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble a guest program and print its canonical JSON form.
    Asm(AsmArgs),
    /// Run a fault-injection campaign.
    Campaign(CampaignArgs),
    /// Build a cleaned dataset from a campaign.
    Dataset(DatasetArgs),
    /// PCA, correlation ranking or hard-region reports for a dataset.
    Analyze(AnalyzeArgs),
    /// Train a detector on a dataset.
    Train(TrainArgs),
    /// Evaluate a trained model, optionally at every checkpoint.
    Eval(EvalArgs),
    /// Train one MLP per top-k feature count.
    Sweep(SweepArgs),
    /// Every stage for one or more benchmarks, plus a markdown report.
    Pipeline(PipelineArgs),
    /// Print the resolved configuration as TOML.
    Config,
    /// List the performance counters.
    Counters,
}

#[derive(Debug, Args)]
pub struct AsmArgs {
    pub source: PathBuf,
    /// Write the program JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print a disassembly listing instead of JSON.
    #[arg(long)]
    pub disasm: bool,
}

#[derive(Debug, Args)]
pub struct CampaignOverrides {
    #[arg(long)]
    pub bench: Option<BenchmarkName>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub input_seed: Option<u64>,
    /// Number of checkpoints spread over the golden run.
    #[arg(long, visible_alias = "checkpoints", conflicts_with = "every")]
    pub count: Option<usize>,
    /// A checkpoint every N ticks.
    #[arg(long)]
    pub every: Option<u64>,
    #[arg(long)]
    pub budget_factor: Option<f64>,
    /// Worker threads; 0 uses every core, 1 runs sequentially.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

impl CampaignOverrides {
    fn apply(&self, cfg: &mut WorkbenchConfig) {
        let c = &mut cfg.campaign;
        if let Some(b) = self.bench {
            c.benchmark = b;
        }
        if let Some(n) = self.runs {
            c.n_runs = n;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if self.input_seed.is_some() {
            c.input_seed = self.input_seed;
        }
        if let Some(n) = self.count {
            c.checkpoints = CheckpointSchedule::Count(n);
        }
        if let Some(k) = self.every {
            c.checkpoints = CheckpointSchedule::Every(k);
        }
        if let Some(f) = self.budget_factor {
            c.budget_factor = f;
        }
    }

    fn exec(&self) -> Execution {
        if self.jobs == 0 {
            Execution::default()
        } else {
            Execution::with_jobs(self.jobs)
        }
    }
}

#[derive(Debug, Args)]
pub struct CampaignArgs {
    #[command(flatten)]
    pub overrides: CampaignOverrides,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[arg(long)]
    pub campaign: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeName>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(value_enum)]
    pub kind: AnalysisKind,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Skip the SVG plots.
    #[arg(long)]
    pub no_svg: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub model: ModelKind,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Train on the k most correlated features, or `all`.
    #[arg(long)]
    pub top_k: Option<FeatureCount>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub split: Option<SplitName>,
    /// Evaluate on the counters of every checkpoint.
    #[arg(long)]
    pub per_checkpoint: bool,
    /// Campaign for `--per-checkpoint`; defaults to the dataset's source.
    #[arg(long, requires = "per_checkpoint")]
    pub campaign: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated feature counts, e.g. `1,2,5,all`.
    #[arg(long)]
    pub ks: Option<String>,
    #[arg(long)]
    pub split: Option<SplitName>,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Benchmarks to run (repeatable); all three by default.
    #[arg(long = "bench")]
    pub benches: Vec<BenchmarkName>,
    #[command(flatten)]
    pub overrides: PipelineOverrides,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineOverrides {
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, visible_alias = "checkpoints", conflicts_with = "every")]
    pub count: Option<usize>,
    #[arg(long)]
    pub every: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

fn print_json(v: serde_json::Value) {
    println!("{v}");
}

struct Ctx {
    workspace: PathBuf,
    config: WorkbenchConfig,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        resolve(&self.workspace, p)
    }
}

fn jobs_exec(jobs: usize) -> Execution {
    if jobs == 0 {
        Execution::default()
    } else {
        Execution::with_jobs(jobs)
    }
}

fn load_model(path: &Path) -> CliResult<TrainedModel> {
    Ok(TrainedModel::load(path)?)
}

/// Runs one parsed invocation.
pub fn execute(cli: Cli) -> CliResult<()> {
    let mut config = match &cli.config {
        Some(p) => WorkbenchConfig::load(&resolve(&cli.workspace, p))?,
        None => WorkbenchConfig::default(),
    };
    let ws = cli.workspace.clone();
    match cli.command {
        Command::Asm(a) => {
            let path = resolve(&ws, &a.source);
            let program = assemble(&read_text(&path)?).map_err(pmufault::Error::from)?;
            let text = if a.disasm { disassemble(&program) } else { program.to_canonical_json() };
            match a.out {
                Some(out) => write_text(&resolve(&ws, &out), &text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Config => {
            config.validate()?;
            print!("{}", config.to_toml());
            Ok(())
        }
        Command::Counters => {
            println!("name,class");
            for e in counter_catalog() {
                println!("{},{}", e.name, e.class.name());
            }
            Ok(())
        }
        Command::Campaign(a) => {
            a.overrides.apply(&mut config);
            config.validate()?;
            let ctx = Ctx { workspace: ws, config };
            let result = commands::campaign(&ctx.config, &ctx.path(&a.out), a.overrides.exec())?;
            print_json(json!({
                "command": "campaign",
                "out": display_path(&a.out),
                "benchmark": result.config.benchmark.as_str(),
                "golden_ticks": result.golden.ticks(),
                "checkpoints": result.checkpoint_count(),
                "counts": counts_json(&result.counts()),
            }));
            Ok(())
        }
        Command::Dataset(a) => {
            if let Some(m) = a.mode {
                config.dataset.mode = m;
            }
            config.validate()?;
            let ctx = Ctx { workspace: ws, config };
            let campaign = load_campaign(&ctx.path(&a.campaign))?;
            let mode = ctx.config.dataset.mode;
            let built = commands::dataset(&ctx.config, &campaign, &display_path(&a.campaign), mode, &ctx.path(&a.out))?;
            print_json(json!({
                "command": "dataset",
                "out": display_path(&a.out),
                "mode": built.mode.describe(),
                "raw_rows": built.raw.len(),
                "raw_features": built.raw.width(),
                "rows": built.dataset.len(),
                "features": built.dataset.width(),
            }));
            Ok(())
        }
        Command::Analyze(a) => {
            if let Some(m) = a.margin {
                config.analysis.margin = m;
            }
            if let Some(c) = a.components {
                config.analysis.components = c;
            }
            if let Some(k) = a.top_k {
                config.analysis.top_k = k;
            }
            if a.no_svg {
                config.output.svg = false;
            }
            config.validate()?;
            let ctx = Ctx { workspace: ws, config };
            let (_, ds) = load_dataset(&ctx.path(&a.dataset))?;
            let out = commands::analyze(&ctx.config, &ds, &display_path(&a.dataset), a.kind, "dataset", &ctx.path(&a.out))?;
            print_json(json!({
                "command": "analyze",
                "out": display_path(&a.out),
                "explained_ratio": out.pca.as_ref().map(|p| p.explained_ratio.clone()),
                "overlap_fraction": out.hard_region.as_ref().map(|h| h.overlap_fraction),
                "ranked_features": out.correlation.as_ref().map(|c| c.ranking.len()),
            }));
            Ok(())
        }
        Command::Train(a) => {
            config.validate()?;
            let ctx = Ctx { workspace: ws, config };
            let (_, ds) = load_dataset(&ctx.path(&a.dataset))?;
            let count = a.top_k.unwrap_or_else(|| commands::default_feature_count(a.model, &ctx.config));
            let t = commands::train_model(&ctx.config, &ds, &display_path(&a.dataset), a.model, count, &ctx.path(&a.out))?;
            let test = t.metrics.iter().find(|r| r.keys[0].1 == "test").map(|r| r.metrics.accuracy);
            print_json(json!({
                "command": "train",
                "out": display_path(&a.out),
                "architecture": t.model.architecture,
                "features": t.model.features.len(),
                "epochs": t.model.history.val_loss.len() - 1,
                "best_epoch": t.model.history.best_epoch,
                "test_accuracy": test,
            }));
            Ok(())
        }
        Command::Eval(a) => {
            if let Some(s) = a.split {
                config.eval.split = s;
            }
            config.validate()?;
            let ctx = Ctx { workspace: ws, config };
            let model = load_model(&ctx.path(&a.model))?;
            let (manifest, ds) = load_dataset(&ctx.path(&a.dataset))?;
            let mut inputs = vec![("model", display_path(&a.model)), ("dataset", display_path(&a.dataset))];
            let campaign = if a.per_checkpoint {
                let src = match (&a.campaign, &manifest.source) {
                    (Some(p), _) => p.clone(),
                    (None, Some(s)) => PathBuf::from(s),
                    (None, None) => {
                        return Err(CliError::config("--per-checkpoint needs --campaign (the dataset records no source)"))
                    }
                };
                inputs.push(("campaign", display_path(&src)));
                Some(load_campaign(&ctx.path(&src))?)
            } else {
                None
            };
            let split = ctx.config.eval.split;
            let out = commands::eval(&ctx.config, &model, &ds, campaign.as_ref(), &inputs, split, &ctx.path(&a.out))?;
            print_json(json!({
                "command": "eval",
                "out": display_path(&a.out),
                "split": split.to_string(),
                "accuracy": out.metrics.accuracy,
                "precision": out.metrics.precision,
                "recall": out.metrics.recall,
                "f1": out.metrics.f1,
                "checkpoints": out.per_checkpoint.as_ref().map(Vec::len),
            }));
            Ok(())
        }
        Command::Sweep(a) => {
            if let Some(ks) = &a.ks {
                config.sweep.ks = ks.clone();
            }
            if let Some(s) = a.split {
                config.eval.split = s;
            }
            config.validate()?;
            let ctx = Ctx { workspace: ws, config };
            let (_, ds) = load_dataset(&ctx.path(&a.dataset))?;
            let rows = commands::sweep(
                &ctx.config,
                &ds,
                &display_path(&a.dataset),
                &ctx.config.sweep.ks,
                ctx.config.eval.split,
                jobs_exec(a.jobs),
                &ctx.path(&a.out),
            )?;
            print_json(json!({
                "command": "sweep",
                "out": display_path(&a.out),
                "ks": rows.iter().map(|r| r.k).collect::<Vec<_>>(),
                "accuracy": rows.iter().map(|r| r.metrics.accuracy).collect::<Vec<_>>(),
            }));
            Ok(())
        }
        Command::Pipeline(a) => {
            let o = &a.overrides;
            let c = &mut config.campaign;
            if let Some(n) = o.runs {
                c.n_runs = n;
            }
            if let Some(s) = o.seed {
                c.seed = s;
            }
            if let Some(n) = o.count {
                c.checkpoints = CheckpointSchedule::Count(n);
            }
            if let Some(k) = o.every {
                c.checkpoints = CheckpointSchedule::Every(k);
            }
            config.validate()?;
            let benches = if a.benches.is_empty() { BenchmarkName::ALL.to_vec() } else { a.benches.clone() };
            let ctx = Ctx { workspace: ws, config };
            let report = pipeline::run(&ctx.config, &benches, &ctx.path(&a.out), &display_path(&a.out), jobs_exec(o.jobs))?;
            print_json(json!({
                "command": "pipeline",
                "out": display_path(&a.out),
                "report": display_path(&a.out.join("report.md")),
                "benchmarks": report.benchmarks.iter().map(|b| json!({
                    "benchmark": b.benchmark,
                    "counts": counts_json(&b.counts),
                    "overlap_fraction": b.hard_region.overlap_fraction,
                })).collect::<Vec<_>>(),
            }));
            Ok(())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
/// Failures are printed to stderr as `{"error": {...}}`.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let err = CliError::new("usage", e.render().to_string().trim());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
