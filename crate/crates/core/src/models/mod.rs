//! Trainable detectors and the evaluation harness.
//!
//! Every network keeps its weights in one flat `Vec<f64>` so the optimizer,
//! gradient checks and model files treat all three kinds alike. Inputs are
//! rows of z-scored features in the order listed by [`TrainedModel::features`].

mod gradcheck;
mod lstm;
mod metrics;
mod mlp;
mod snn;
mod train;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{correlation_report, select_top_k, CorrelationReport};
use crate::dataset::{base_feature_names, base_features, split_temporal_name, temporal_name, Dataset, DatasetError, Normalization, SplitName};
use crate::exec::Execution;
use crate::injector::CampaignResult;
use crate::io::{parse_error, read_json, write_json};

pub use gradcheck::{gradient_check, GradientCheck};
pub use lstm::Lstm;
pub use metrics::{metrics_from_confusion, write_metrics_csv, Confusion, Metrics, MetricsRow};
pub use mlp::Mlp;
pub use snn::{lif_step, rate_encode, surrogate_grad, Encoder, LifParams, Snn, SpikeFn};
pub use train::{batch_loss_grad, fit, mean_loss, Adam, TrainConfig, TrainingHistory};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("confusion matrix is empty")]
    EmptyConfusion,
    #[error("non-finite loss {loss} at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error("dataset lacks model features: {}", .missing.join(", "))]
    FeatureMismatch { missing: Vec<String> },
    #[error("split `{0}` is empty")]
    EmptySplit(SplitName),
    #[error("checkpoint {index} out of range (model data has {count})")]
    CheckpointOutOfRange { index: usize, count: usize },
    #[error("{0}")]
    Sequence(String),
    #[error("feature counts must be strictly ascending, got {0:?}")]
    UnsortedKs(Vec<usize>),
    #[error(transparent)]
    Analysis(#[from] crate::analysis::AnalysisError),
}

impl From<DatasetError> for ModelError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::UnknownFeatures(missing) => ModelError::FeatureMismatch { missing },
            other => ModelError::Config(other.to_string()),
        }
    }
}

/// A differentiable two-class network over flat parameters.
pub trait Network {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Class scores (logits, or spike counts for the SNN).
    fn logits(&self, x: &[f64]) -> Vec<f64>;
    /// Cross-entropy of one sample; its gradient is added into `grad`.
    fn sample_loss_grad(&self, x: &[f64], y: u8, grad: &mut [f64]) -> f64;

    fn sample_loss(&self, x: &[f64], y: u8) -> f64 {
        softmax_cross_entropy(&self.logits(x), y).0
    }

    /// Argmax of the scores; a tie predicts Benign.
    fn predict(&self, x: &[f64]) -> u8 {
        let z = self.logits(x);
        u8::from(z[1] > z[0])
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Loss and gradient w.r.t. the logits.
pub(crate) fn softmax_cross_entropy(z: &[f64], y: u8) -> (f64, Vec<f64>) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|v| (v - m).exp()).sum();
    let lse = m + sum.ln();
    let y = usize::from(y);
    let grad = z
        .iter()
        .enumerate()
        .map(|(k, v)| (v - lse).exp() - if k == y { 1.0 } else { 0.0 })
        .collect();
    (lse - z[y], grad)
}

pub(crate) fn uniform_init<R: Rng>(rng: &mut R, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Lstm,
    Snn,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Lstm => "lstm",
            ModelKind::Snn => "snn",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mlp" => Ok(ModelKind::Mlp),
            "lstm" => Ok(ModelKind::Lstm),
            "snn" => Ok(ModelKind::Snn),
            _ => Err(format!("unknown model kind `{s}` (expected mlp, lstm or snn)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmConfig {
    pub hidden: usize,
    pub readout: usize,
    pub train: TrainConfig,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            readout: 25,
            train: TrainConfig {
                max_epochs: 60,
                patience: 10,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnnConfig {
    pub hidden: Vec<usize>,
    pub lif: LifParams,
    pub train: TrainConfig,
}

impl Default for SnnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            lif: LifParams::default(),
            train: TrainConfig {
                max_epochs: 100,
                ..TrainConfig::default()
            },
        }
    }
}

/// Configuration echo stored with a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Mlp(MlpConfig),
    Lstm(LstmConfig),
    Snn(SnnConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Net {
    Mlp(Mlp),
    Lstm(Lstm),
    Snn(Snn),
}

impl Net {
    pub fn kind(&self) -> ModelKind {
        match self {
            Net::Mlp(_) => ModelKind::Mlp,
            Net::Lstm(_) => ModelKind::Lstm,
            Net::Snn(_) => ModelKind::Snn,
        }
    }

    pub fn network(&self) -> &dyn Network {
        match self {
            Net::Mlp(n) => n,
            Net::Lstm(n) => n,
            Net::Snn(n) => n,
        }
    }
}

pub const FORMAT: &str = "pmufault-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub format_version: u32,
    pub tool_version: String,
    pub architecture: String,
    /// Input columns, in the order the network consumes them.
    pub features: Vec<String>,
    /// Z-score parameters of `features`, for inputs that are not yet normalized.
    pub normalization: Normalization,
    pub config: ModelConfig,
    pub history: TrainingHistory,
    pub net: Net,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.net.kind()
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        self.net.network().predict(x)
    }

    pub fn save(&self, path: &Path) -> crate::Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let m: TrainedModel = read_json(path)?;
        if m.format != FORMAT || m.format_version != FORMAT_VERSION {
            return Err(parse_error(path, format!("not a {FORMAT} v{FORMAT_VERSION} file")));
        }
        Ok(m)
    }
}

fn wrap(
    features: Vec<String>,
    dataset: &Dataset,
    config: ModelConfig,
    history: TrainingHistory,
    net: Net,
    architecture: String,
) -> Result<TrainedModel, ModelError> {
    Ok(TrainedModel {
        format: FORMAT.into(),
        format_version: FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        architecture,
        normalization: dataset.normalization.select(&features)?,
        features,
        config,
        history,
        net,
    })
}

fn resolve_features(dataset: &Dataset, features: Option<&[String]>) -> Vec<String> {
    features.map_or_else(|| dataset.feature_names.clone(), <[String]>::to_vec)
}

fn split_data(dataset: &Dataset, features: &[String], which: SplitName) -> Result<(Vec<Vec<f64>>, Vec<u8>), ModelError> {
    let cols = dataset.columns(features)?;
    Ok(dataset.split_matrix(which, &cols))
}

/// Trains the fully connected detector on `features` (all columns by default).
pub fn train_mlp(dataset: &Dataset, features: Option<&[String]>, config: &MlpConfig) -> Result<TrainedModel, ModelError> {
    let features = resolve_features(dataset, features);
    if features.is_empty() {
        return Err(ModelError::Config("no input features".into()));
    }
    let (xs, ys) = split_data(dataset, &features, SplitName::Train)?;
    let (vx, vy) = split_data(dataset, &features, SplitName::Val)?;
    let mut layers = vec![features.len()];
    layers.extend(config.hidden.iter().copied());
    layers.push(2);
    if layers.contains(&0) {
        return Err(ModelError::Config(format!("layer sizes must be positive, got {layers:?}")));
    }
    let mut net = Mlp::new(layers.clone(), &mut init_rng(config.train.seed));
    let history = fit(&mut net, (&xs, &ys), (&vx, &vy), &config.train)?;
    let arch = format!(
        "FC-FFNN {}",
        layers.iter().map(|l| l.to_string()).collect::<Vec<_>>().join("-")
    );
    wrap(features, dataset, ModelConfig::Mlp(config.clone()), history, Net::Mlp(net), arch)
}

/// How a flat temporal row maps onto LSTM time steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceLayout {
    pub steps: usize,
    /// Per-step features, present at every checkpoint.
    pub base: Vec<String>,
    /// Time-major column names, `steps * base.len()` long.
    pub columns: Vec<String>,
}

/// Uses only base features that survived cleaning at every checkpoint. A set
/// without `@cp` suffixes is a single step.
pub fn sequence_layout(names: &[String]) -> Result<SequenceLayout, ModelError> {
    let parsed: Vec<(&str, Option<usize>)> = names.iter().map(|n| split_temporal_name(n)).collect();
    let temporal = parsed.iter().filter(|p| p.1.is_some()).count();
    if temporal == 0 {
        return Ok(SequenceLayout {
            steps: 1,
            base: names.to_vec(),
            columns: names.to_vec(),
        });
    }
    if temporal != names.len() {
        return Err(ModelError::Sequence("mixed temporal and cumulative columns".into()));
    }
    let steps = parsed.iter().filter_map(|p| p.1).max().unwrap_or(0) + 1;
    let mut seen: HashMap<&str, Vec<bool>> = HashMap::new();
    let mut order: Vec<&str> = Vec::new();
    for &(b, cp) in &parsed {
        let e = seen.entry(b).or_insert_with(|| {
            order.push(b);
            vec![false; steps]
        });
        e[cp.expect("checked above")] = true;
    }
    let base: Vec<String> = order
        .into_iter()
        .filter(|b| seen[b].iter().all(|&x| x))
        .map(String::from)
        .collect();
    if base.is_empty() {
        return Err(ModelError::Sequence("no feature is present at every checkpoint".into()));
    }
    let columns = (0..steps).flat_map(|t| base.iter().map(move |b| temporal_name(b, t))).collect();
    Ok(SequenceLayout { steps, base, columns })
}

/// Trains the LSTM on a temporal dataset (or a cumulative one as a 1-step
/// sequence). `features`, when given, restricts the candidate columns.
pub fn train_lstm(dataset: &Dataset, features: Option<&[String]>, config: &LstmConfig) -> Result<TrainedModel, ModelError> {
    if config.hidden == 0 || config.readout == 0 {
        return Err(ModelError::Config("hidden and readout sizes must be positive".into()));
    }
    let layout = sequence_layout(&resolve_features(dataset, features))?;
    let (xs, ys) = split_data(dataset, &layout.columns, SplitName::Train)?;
    let (vx, vy) = split_data(dataset, &layout.columns, SplitName::Val)?;
    let mut net = Lstm::new(layout.base.len(), config.hidden, config.readout, layout.steps, &mut init_rng(config.train.seed));
    let history = fit(&mut net, (&xs, &ys), (&vx, &vy), &config.train)?;
    let arch = format!("LSTM {} blocks-{}FC-2FC x{} steps", config.hidden, config.readout, layout.steps);
    wrap(layout.columns, dataset, ModelConfig::Lstm(config.clone()), history, Net::Lstm(net), arch)
}

/// Trains the rate-coded LIF network with surrogate gradients.
pub fn train_snn(dataset: &Dataset, features: Option<&[String]>, config: &SnnConfig) -> Result<TrainedModel, ModelError> {
    config.lif.validate()?;
    let features = resolve_features(dataset, features);
    if features.is_empty() {
        return Err(ModelError::Config("no input features".into()));
    }
    let (xs, ys) = split_data(dataset, &features, SplitName::Train)?;
    let (vx, vy) = split_data(dataset, &features, SplitName::Val)?;
    let d = features.len();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for r in &xs {
        for j in 0..d {
            lo[j] = lo[j].min(r[j]);
            hi[j] = hi[j].max(r[j]);
        }
    }
    if xs.is_empty() {
        lo.fill(0.0);
        hi.fill(0.0);
    }
    let mut layers = vec![d];
    layers.extend(config.hidden.iter().copied());
    layers.push(2);
    if layers.contains(&0) {
        return Err(ModelError::Config(format!("layer sizes must be positive, got {layers:?}")));
    }
    let mut net = Snn::new(layers.clone(), config.lif.clone(), lo, hi, &mut init_rng(config.train.seed));
    let history = fit(&mut net, (&xs, &ys), (&vx, &vy), &config.train)?;
    let arch = format!(
        "SNN {} T={}",
        layers.iter().map(|l| l.to_string()).collect::<Vec<_>>().join("-"),
        config.lif.timesteps
    );
    wrap(features, dataset, ModelConfig::Snn(config.clone()), history, Net::Snn(net), arch)
}

pub fn train(kind: ModelKind, dataset: &Dataset, features: Option<&[String]>, config: &ModelsConfig) -> Result<TrainedModel, ModelError> {
    match kind {
        ModelKind::Mlp => train_mlp(dataset, features, &config.mlp),
        ModelKind::Lstm => train_lstm(dataset, features, &config.lstm),
        ModelKind::Snn => train_snn(dataset, features, &config.snn),
    }
}

/// Per-kind model settings, as read from a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelsConfig {
    pub mlp: MlpConfig,
    pub lstm: LstmConfig,
    pub snn: SnnConfig,
}

/// Confusion counts of `model` on one split.
pub fn evaluate(model: &TrainedModel, dataset: &Dataset, split: SplitName) -> Result<Metrics, ModelError> {
    let (xs, ys) = split_data(dataset, &model.features, split)?;
    score(model, &xs, &ys).ok_or(ModelError::EmptySplit(split))
}

fn score(model: &TrainedModel, xs: &[Vec<f64>], ys: &[u8]) -> Option<Metrics> {
    let net = model.net.network();
    let mut c = Confusion::default();
    for (x, &y) in xs.iter().zip(ys) {
        c.record(y, net.predict(x));
    }
    Metrics::from_confusion(c).ok()
}

/// Ranks features by |r| with the label on the training rows.
pub fn rank_features(dataset: &Dataset) -> CorrelationReport {
    let all: Vec<usize> = (0..dataset.width()).collect();
    let (rows, labels) = dataset.split_matrix(SplitName::Train, &all);
    correlation_report(&dataset.feature_names, &rows, &labels)
}

/// The top `k` features of `ranking`, returned in dataset column order.
pub fn top_k_features(dataset: &Dataset, ranking: &CorrelationReport, k: usize) -> Result<Vec<String>, ModelError> {
    let top = select_top_k(ranking, k)?;
    Ok(dataset.feature_names.iter().filter(|f| top.contains(f)).cloned().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEval {
    pub checkpoint: usize,
    /// Mean dump tick over the evaluated runs.
    pub mean_tick: f64,
    pub metrics: Metrics,
}

/// Evaluates a cumulative-trained model on the features of dump `index` of
/// every run in `split`. Counter values are normalized with the model's
/// stored parameters; NaN ratio features are set to 0 first, as in cleaning.
pub fn checkpoint_eval(
    model: &TrainedModel,
    dataset: &Dataset,
    campaign: &CampaignResult,
    index: usize,
    split: SplitName,
) -> Result<CheckpointEval, ModelError> {
    let count = campaign.checkpoint_count();
    if index >= count {
        return Err(ModelError::CheckpointOutOfRange { index, count });
    }
    let names = base_feature_names();
    let mut cols = Vec::with_capacity(model.features.len());
    let mut missing = Vec::new();
    for f in &model.features {
        match names.iter().position(|n| n == f) {
            Some(j) => cols.push(j),
            None => missing.push(f.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(ModelError::FeatureMismatch { missing });
    }
    let rows = dataset.splits.get(split);
    let mut xs = Vec::with_capacity(rows.len());
    let mut ys = Vec::with_capacity(rows.len());
    let mut ticks = 0.0;
    for &i in rows {
        let run = dataset.runs[i];
        let rec = campaign
            .records
            .get(run)
            .filter(|r| r.run == run)
            .ok_or_else(|| ModelError::Config(format!("campaign has no run {run}")))?;
        let all = base_features(&rec.stats_checkpoints[index]);
        let mut x: Vec<f64> = cols.iter().map(|&j| if all[j].is_nan() { 0.0 } else { all[j] }).collect();
        model.normalization.apply(&mut x);
        xs.push(x);
        ys.push(dataset.labels[i]);
        ticks += rec.checkpoint_ticks[index] as f64;
    }
    let metrics = score(model, &xs, &ys).ok_or(ModelError::EmptySplit(split))?;
    Ok(CheckpointEval {
        checkpoint: index,
        mean_tick: ticks / rows.len() as f64,
        metrics,
    })
}

/// One row per checkpoint; the last equals [`evaluate`] on the cumulative set.
pub fn per_checkpoint_eval(
    model: &TrainedModel,
    dataset: &Dataset,
    campaign: &CampaignResult,
    split: SplitName,
) -> Result<Vec<CheckpointEval>, ModelError> {
    (0..campaign.checkpoint_count())
        .map(|t| checkpoint_eval(model, dataset, campaign, t, split))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub architecture: String,
    pub features: Vec<String>,
    pub metrics: Metrics,
}

/// One independently trained MLP per `k`, on the top-`k` training-split
/// features; evaluated on `split`.
pub fn feature_count_sweep(
    dataset: &Dataset,
    ks: &[usize],
    config: &MlpConfig,
    split: SplitName,
    exec: Execution,
) -> Result<Vec<SweepRow>, ModelError> {
    if ks.windows(2).any(|w| w[0] >= w[1]) || ks.first() == Some(&0) {
        return Err(ModelError::UnsortedKs(ks.to_vec()));
    }
    let ranking = rank_features(dataset);
    let subsets = ks
        .iter()
        .map(|&k| top_k_features(dataset, &ranking, k))
        .collect::<Result<Vec<_>, _>>()?;
    exec.map_indexed(ks.len(), |i| {
        let model = train_mlp(dataset, Some(&subsets[i]), config)?;
        Ok(SweepRow {
            k: ks[i],
            architecture: model.architecture.clone(),
            features: subsets[i].clone(),
            metrics: evaluate(&model, dataset, split)?,
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_ce_matches_closed_form() {
        let (l, g) = softmax_cross_entropy(&[0.0, 0.0], 1);
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert_eq!(g, vec![0.5, -0.5]);
        let (l, _) = softmax_cross_entropy(&[1000.0, 0.0], 0);
        assert!(l.abs() < 1e-12);
    }

    #[test]
    fn layouts() {
        let names: Vec<String> = ["a@cp0", "b@cp0", "a@cp1", "c@cp1", "b@cp1"].map(String::from).to_vec();
        let l = sequence_layout(&names).unwrap();
        assert_eq!(l.steps, 2);
        assert_eq!(l.base, vec!["a", "b"]);
        assert_eq!(l.columns, vec!["a@cp0", "b@cp0", "a@cp1", "b@cp1"]);
        let flat: Vec<String> = ["x", "y"].map(String::from).to_vec();
        assert_eq!(sequence_layout(&flat).unwrap().steps, 1);
        assert!(sequence_layout(&["a@cp0".to_string(), "x".to_string()]).is_err());
    }

    #[test]
    fn lif_examples() {
        assert_eq!(lif_step(0.0, 1.0, 0.9, 1.0), (0.0, true));
        assert_eq!(lif_step(0.0, 0.0, 0.9, 1.0), (0.0, false));
        let mut u = 0.8;
        for k in 1..=5 {
            u = lif_step(u, 0.0, 0.9, 1.0).0;
            assert!((u - 0.8 * 0.9f64.powi(k)).abs() < 1e-15);
        }
    }

    #[test]
    fn rate_coding() {
        let mut rng = init_rng(0);
        let count = |x, e| rate_encode(x, 10, e, &mut init_rng(3)).iter().sum::<f64>();
        assert_eq!(count(1.0, Encoder::Deterministic), 10.0);
        assert_eq!(count(0.0, Encoder::Deterministic), 0.0);
        assert_eq!(count(0.5, Encoder::Deterministic), 5.0);
        assert_eq!(count(1.0, Encoder::Bernoulli), 10.0);
        assert_eq!(count(0.0, Encoder::Bernoulli), 0.0);
        let n: f64 = (0..2000).map(|_| rate_encode(0.3, 10, Encoder::Bernoulli, &mut rng).iter().sum::<f64>()).sum();
        assert!((n / 20000.0 - 0.3).abs() < 0.02);
    }
}
