use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{batch_loss_grad, init_rng, mean_loss, LifParams, Lstm, Mlp, ModelKind, Network, Snn, SpikeFn};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Denominator floor of the relative error. Central differences at `STEP`
/// carry roughly 1e-11 of rounding noise, so components below this are
/// compared at that absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub kind: ModelKind,
    pub params: usize,
    pub samples: usize,
    /// max over parameters of `|a - n| / max(|a|, |n|, REL_FLOOR)`.
    pub max_rel_error: f64,
}

fn check<N: Network>(kind: ModelKind, mut net: N, xs: &[Vec<f64>], ys: &[u8]) -> GradientCheck {
    let all: Vec<usize> = (0..xs.len()).collect();
    let (_, analytic) = batch_loss_grad(&net, xs, ys, &all);
    let mut worst: f64 = 0.0;
    for i in 0..analytic.len() {
        let p = net.params()[i];
        net.params_mut()[i] = p + STEP;
        let up = mean_loss(&net, xs, ys);
        net.params_mut()[i] = p - STEP;
        let down = mean_loss(&net, xs, ys);
        net.params_mut()[i] = p;
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max(rel);
    }
    GradientCheck {
        kind,
        params: analytic.len(),
        samples: xs.len(),
        max_rel_error: worst,
    }
}

/// Analytic vs central-difference gradients on a small random instance:
/// MLP 4-3-2, LSTM with 4 hidden units over 3 steps, SNN 4-3-2 over 5 steps
/// with the relaxed spike function. Five samples each.
pub fn gradient_check(kind: ModelKind, seed: u64) -> GradientCheck {
    let mut rng = init_rng(seed);
    let n = 5;
    let ys: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let mut data = |width: usize| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    };
    match kind {
        ModelKind::Mlp => {
            let xs = data(4);
            check(kind, Mlp::new(vec![4, 3, 2], &mut init_rng(seed ^ 1)), &xs, &ys)
        }
        ModelKind::Lstm => {
            let xs = data(2 * 3);
            check(kind, Lstm::new(2, 4, 3, 3, &mut init_rng(seed ^ 1)), &xs, &ys)
        }
        ModelKind::Snn => {
            let xs = data(4);
            let lif = LifParams {
                timesteps: 5,
                spike_fn: SpikeFn::Relaxed,
                ..LifParams::default()
            };
            let mut net = Snn::new(vec![4, 3, 2], lif, vec![-1.0; 4], vec![1.0; 4], &mut init_rng(seed ^ 1));
            // Larger weights keep membranes near threshold so every path is exercised.
            for p in net.params_mut() {
                *p *= 2.0;
            }
            check(kind, net, &xs, &ys)
        }
    }
}
