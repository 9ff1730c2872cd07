use pmufault::benchmarks::BenchmarkName;
use pmufault::dataset::{preprocess, Dataset, FeatureMode, PreprocessConfig, RawDataset, SplitName};
use pmufault::injector::{run_campaign, CampaignConfig};
use pmufault::models::{
    evaluate, feature_count_sweep, gradient_check, mean_loss, metrics_from_confusion, per_checkpoint_eval,
    train_lstm, train_mlp, train_snn, LifParams, LstmConfig, MlpConfig, ModelError, ModelKind, Net, Network,
    SnnConfig, TrainConfig, TrainedModel,
};
use pmufault::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset_from(names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Dataset {
    let raw = RawDataset { feature_names: names, runs: (0..rows.len()).collect(), rows, labels };
    preprocess(&raw, &PreprocessConfig::default()).unwrap()
}

fn names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("f{j:02}")).collect()
}

/// Points on either side of a random hyperplane, with a margin.
fn separable(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (mut rows, mut labels) = (Vec::new(), Vec::new());
    while rows.len() < n {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - 0.2;
        if s.abs() < 0.75 {
            continue;
        }
        labels.push(u8::from(s > 0.0));
        rows.push(x);
    }
    dataset_from(names(d), rows, labels)
}

/// Feature 0 equals the label; the rest are noise. 75/25 class balance.
fn oracle(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 4 == 3)).collect();
    let rows = labels
        .iter()
        .map(|&l| std::iter::once(f64::from(l)).chain((1..d).map(|_| rng.gen_range(-1.0..1.0))).collect())
        .collect();
    dataset_from(names(d), rows, labels)
}

#[test]
fn metrics_fixtures() {
    // (tp, fp, fn, tn) -> (accuracy, precision, recall, f1), hand-computed.
    let cases: [((u64, u64, u64, u64), (f64, Option<f64>, Option<f64>, Option<f64>)); 10] = [
        ((2, 0, 1, 5), (7.0 / 8.0, Some(1.0), Some(2.0 / 3.0), Some(0.8))),
        ((0, 0, 3, 7), (0.7, None, Some(0.0), None)),
        ((5, 0, 0, 5), (1.0, Some(1.0), Some(1.0), Some(1.0))),
        ((0, 4, 0, 6), (0.6, Some(0.0), None, None)),
        ((0, 0, 0, 9), (1.0, None, None, None)),
        ((3, 1, 1, 5), (0.8, Some(0.75), Some(0.75), Some(0.75))),
        ((1, 3, 2, 4), (0.5, Some(0.25), Some(1.0 / 3.0), Some(2.0 / 7.0))),
        ((10, 5, 5, 80), (0.9, Some(2.0 / 3.0), Some(2.0 / 3.0), Some(2.0 / 3.0))),
        ((0, 2, 3, 5), (0.5, Some(0.0), Some(0.0), Some(0.0))),
        ((7, 0, 0, 0), (1.0, Some(1.0), Some(1.0), Some(1.0))),
    ];
    for ((tp, fp, fn_, tn), (acc, p, r, f1)) in cases {
        let m = metrics_from_confusion(tp, fp, fn_, tn).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (acc, p, r, f1), "{tp},{fp},{fn_},{tn}");
        assert_eq!(m.accuracy, (tp + tn) as f64 / (tp + fp + fn_ + tn) as f64);
        if let (Some(p), Some(r), Some(f)) = (m.precision, m.recall, m.f1) {
            if p + r > 0.0 {
                assert!((f - 2.0 * p * r / (p + r)).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn gradient_checks() {
    for seed in 0..10 {
        assert!(gradient_check(ModelKind::Mlp, seed).max_rel_error < 1e-4);
        assert!(gradient_check(ModelKind::Lstm, seed).max_rel_error < 1e-4);
        assert!(gradient_check(ModelKind::Snn, seed).max_rel_error < 1e-3);
    }
}

#[test]
fn mlp_learns_separable_data() {
    let d = separable(200, 10, 4);
    let m = train_mlp(&d, None, &MlpConfig::default()).unwrap();
    let acc = evaluate(&m, &d, SplitName::Test).unwrap().accuracy;
    assert!(acc >= 0.99, "test accuracy {acc}");
    assert!(m.history.val_loss.len() <= 201);
}

#[test]
fn zero_epochs_keeps_initialization_and_training_is_seeded() {
    let d = separable(100, 5, 1);
    let cfg = MlpConfig { train: TrainConfig { max_epochs: 0, ..Default::default() }, ..Default::default() };
    let a = train_mlp(&d, None, &cfg).unwrap();
    let b = train_mlp(&d, None, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.history.val_loss.len(), 1);
    let Net::Mlp(net) = &a.net else { panic!() };
    let fresh = pmufault::models::Mlp::new(net.layers.clone(), &mut ChaCha8Rng::seed_from_u64(cfg.train.seed));
    assert_eq!(net, &fresh);
    evaluate(&a, &d, SplitName::Test).unwrap();

    let full = MlpConfig::default();
    let x = train_mlp(&d, None, &full).unwrap();
    let y = train_mlp(&d, None, &full).unwrap();
    assert_eq!(x, y);
    assert_eq!(serde_json::to_string(&x).unwrap(), serde_json::to_string(&y).unwrap());
}

#[test]
fn early_stopping_keeps_best_validation_weights() {
    let d = oracle(300, 8, 2);
    let cfg = MlpConfig { train: TrainConfig { max_epochs: 80, patience: 5, ..Default::default() }, ..Default::default() };
    let m = train_mlp(&d, None, &cfg).unwrap();
    let cols = d.columns(&m.features).unwrap();
    let (vx, vy) = d.split_matrix(SplitName::Val, &cols);
    let best = m.history.val_loss.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(mean_loss(m.net.network(), &vx, &vy), best);
    assert_eq!(m.history.val_loss[m.history.best_epoch], best);
}

#[test]
fn snn_learns_oracle_feature() {
    let d = oracle(400, 6, 3);
    let m = train_snn(&d, None, &SnnConfig::default()).unwrap();
    let acc = evaluate(&m, &d, SplitName::Test).unwrap().accuracy;
    assert!(acc >= 0.95, "SNN test accuracy {acc}");

    let Net::Snn(net) = &m.net else { panic!() };
    let t = net.lif.timesteps as f64;
    for r in &d.rows {
        let c = net.spike_counts(&d.columns(&m.features).unwrap().iter().map(|&j| r[j]).collect::<Vec<_>>());
        assert!(c.iter().all(|&v| (0.0..=t).contains(&v)));
    }
    let again = train_snn(&d, None, &SnnConfig::default()).unwrap();
    assert_eq!(m, again);
}

#[test]
fn snn_single_step_and_bernoulli() {
    let d = oracle(400, 4, 5);
    let one = SnnConfig { lif: LifParams { timesteps: 1, ..Default::default() }, ..Default::default() };
    let m = train_snn(&d, None, &one).unwrap();
    let acc = evaluate(&m, &d, SplitName::Test).unwrap().accuracy;
    assert!(acc >= 0.95, "T=1 accuracy {acc}");

    let bern = SnnConfig {
        lif: LifParams { encoder: pmufault::models::Encoder::Bernoulli, ..Default::default() },
        ..Default::default()
    };
    let m = train_snn(&d, None, &bern).unwrap();
    let p1 = evaluate(&m, &d, SplitName::Test).unwrap();
    let p2 = evaluate(&m, &d, SplitName::Test).unwrap();
    assert_eq!(p1, p2);
    assert!(p1.accuracy >= 0.9, "Bernoulli accuracy {}", p1.accuracy);

    let bad = SnnConfig { lif: LifParams { beta: 1.0, ..Default::default() }, ..Default::default() };
    assert!(matches!(train_snn(&d, None, &bad), Err(ModelError::Config(_))));
}

#[test]
fn lstm_learns_and_is_seeded() {
    let d = oracle(300, 4, 8);
    let cfg = LstmConfig::default();
    let a = train_lstm(&d, None, &cfg).unwrap();
    let b = train_lstm(&d, None, &cfg).unwrap();
    assert_eq!(a, b);
    let acc = evaluate(&a, &d, SplitName::Test).unwrap().accuracy;
    assert!(acc >= 0.95, "LSTM accuracy {acc}");
}

#[test]
fn constant_benign_predictor() {
    let d = oracle(400, 3, 9);
    let cfg = MlpConfig { train: TrainConfig { max_epochs: 0, ..Default::default() }, ..Default::default() };
    let mut m = train_mlp(&d, None, &cfg).unwrap();
    let Net::Mlp(net) = &mut m.net else { panic!() };
    let n = net.params.len();
    net.params_mut().fill(0.0);
    net.params[n - 2] = 1.0;
    let metrics = evaluate(&m, &d, SplitName::Test).unwrap();
    assert_eq!(metrics.accuracy, 0.75);
    assert_eq!(metrics.recall, Some(0.0));
    assert_eq!(metrics.precision, None);
}

#[test]
fn permuted_labels_do_not_beat_the_baseline() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let d = separable(600, 6, 12);
    let mut labels = d.labels.clone();
    for i in (1..labels.len()).rev() {
        labels.swap(i, rng.gen_range(0..=i));
    }
    let shuffled = dataset_from(d.feature_names.clone(), d.rows.clone(), labels);
    let m = train_mlp(&shuffled, None, &MlpConfig::default()).unwrap();
    let acc = evaluate(&m, &shuffled, SplitName::Test).unwrap().accuracy;
    let base = shuffled.majority_baseline(SplitName::Test);
    assert!(acc < base + 0.1, "accuracy {acc} vs baseline {base}");
}

#[test]
fn feature_mismatch_is_named() {
    let d = oracle(100, 4, 1);
    let m = train_mlp(&d, None, &MlpConfig { train: TrainConfig { max_epochs: 1, ..Default::default() }, ..Default::default() }).unwrap();
    let keep: Vec<String> = d.feature_names[..2].to_vec();
    let smaller = d.select_features(&keep).unwrap();
    match evaluate(&m, &smaller, SplitName::Test) {
        Err(ModelError::FeatureMismatch { missing }) => assert_eq!(missing, vec!["f02", "f03"]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn sweep_shapes() {
    let d = oracle(300, 6, 4);
    let cfg = MlpConfig { train: TrainConfig { max_epochs: 60, ..Default::default() }, ..Default::default() };
    let rows = feature_count_sweep(&d, &[1, 3, 6], &cfg, SplitName::Test, Execution::default()).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].features, vec!["f00"]);
    assert_eq!(rows[0].metrics.accuracy, 1.0);
    let full = train_mlp(&d, None, &cfg).unwrap();
    assert_eq!(rows[2].features, full.features);
    assert_eq!(rows[2].metrics, evaluate(&full, &d, SplitName::Test).unwrap());
    let seq = feature_count_sweep(&d, &[1, 3, 6], &cfg, SplitName::Test, Execution::Sequential).unwrap();
    assert_eq!(rows, seq);
    assert!(feature_count_sweep(&d, &[3, 1], &cfg, SplitName::Test, Execution::Sequential).is_err());
}

#[test]
fn model_file_round_trip() {
    let d = oracle(120, 3, 6);
    let m = train_mlp(&d, None, &MlpConfig { train: TrainConfig { max_epochs: 5, ..Default::default() }, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.json");
    m.save(&p).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    let back = TrainedModel::load(&p).unwrap();
    assert_eq!(back, m);
    back.save(&p).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), bytes);
}

#[test]
fn per_checkpoint_protocol_on_a_campaign() {
    let cfg = CampaignConfig { benchmark: BenchmarkName::Qsort, n_runs: 300, seed: 21, ..Default::default() };
    let campaign = run_campaign(&cfg, Execution::default()).unwrap();
    let raw = RawDataset::from_campaign(&campaign, FeatureMode::Cumulative).unwrap();
    let d = preprocess(&raw, &PreprocessConfig::default()).unwrap();
    let mcfg = MlpConfig { train: TrainConfig { max_epochs: 40, ..Default::default() }, ..Default::default() };
    let model = train_mlp(&d, None, &mcfg).unwrap();
    let rows = per_checkpoint_eval(&model, &d, &campaign, SplitName::Test).unwrap();
    assert_eq!(rows.len(), 10);
    let cumulative = evaluate(&model, &d, SplitName::Test).unwrap();
    assert_eq!(rows[9].metrics, cumulative);
    assert!(rows.windows(2).all(|w| w[0].mean_tick <= w[1].mean_tick));
}

