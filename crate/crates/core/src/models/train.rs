use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, Network};

/// Optimizer and stopping settings shared by every trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 200,
            patience: 20,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ModelError::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Per-epoch losses; entry 0 is the untrained network.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Mean loss over `xs`.
pub fn mean_loss<N: Network + ?Sized>(net: &N, xs: &[Vec<f64>], ys: &[u8]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().zip(ys).map(|(x, &y)| net.sample_loss(x, y)).sum::<f64>() / xs.len() as f64
}

/// Mean loss and gradient over a batch of row indices.
pub fn batch_loss_grad<N: Network + ?Sized>(net: &N, xs: &[Vec<f64>], ys: &[u8], batch: &[usize]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; net.params().len()];
    let mut loss = 0.0;
    for &i in batch {
        loss += net.sample_loss_grad(&xs[i], ys[i], &mut grad);
    }
    let scale = 1.0 / batch.len() as f64;
    for g in &mut grad {
        *g *= scale;
    }
    (loss * scale, grad)
}

/// Mini-batch Adam with early stopping on validation loss (training loss when
/// there is no validation data). Leaves `net` holding the best weights.
pub fn fit<N: Network + ?Sized>(
    net: &mut N,
    train: (&[Vec<f64>], &[u8]),
    val: (&[Vec<f64>], &[u8]),
    config: &TrainConfig,
) -> Result<TrainingHistory, ModelError> {
    config.validate()?;
    let (xs, ys) = train;
    let monitor = |net: &N| {
        if val.0.is_empty() {
            mean_loss(net, xs, ys)
        } else {
            mean_loss(net, val.0, val.1)
        }
    };
    let mut history = TrainingHistory::default();
    history.train_loss.push(mean_loss(net, xs, ys));
    let first = monitor(net);
    history.val_loss.push(first);
    if config.max_epochs == 0 || xs.is_empty() {
        return Ok(history);
    }
    if !first.is_finite() {
        return Err(ModelError::NonFiniteLoss { epoch: 0, loss: first });
    }

    let mut best = (first, net.params().to_vec());
    let mut adam = Adam::new(net.params().len(), config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grad) = batch_loss_grad(net, xs, ys, batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ModelError::NonFiniteLoss { epoch, loss });
            }
            total += loss * batch.len() as f64;
            adam.step(net.params_mut(), &grad);
        }
        history.train_loss.push(total / xs.len() as f64);
        let v = monitor(net);
        if !v.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch, loss: v });
        }
        history.val_loss.push(v);
        if v < best.0 {
            best = (v, net.params().to_vec());
            history.best_epoch = epoch;
        } else if epoch - history.best_epoch >= config.patience {
            history.stopped_early = true;
            break;
        }
    }
    net.params_mut().copy_from_slice(&best.1);
    Ok(history)
}
