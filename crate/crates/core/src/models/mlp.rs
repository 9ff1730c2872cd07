use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{softmax_cross_entropy, uniform_init, Network};

/// Fully connected network: ReLU hidden layers, 2-way softmax output.
/// Parameters are laid out layer by layer as `W (out x in, row-major), b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<usize>,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn new<R: Rng>(layers: Vec<usize>, rng: &mut R) -> Self {
        assert!(layers.len() >= 2, "an MLP needs input and output sizes");
        let mut params = Vec::with_capacity(Self::param_count(&layers));
        for w in layers.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in.max(1) as f64).sqrt();
            params.extend(uniform_init(rng, fan_in * fan_out, bound));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self { layers, params }
    }

    pub fn param_count(layers: &[usize]) -> usize {
        layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Pre-activations of every layer, plus post-ReLU activations of the
    /// hidden layers (`acts[0]` is the input).
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        let last = self.layers.len() - 2;
        for (l, w) in self.layers.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let (wts, bias) = self.params[off..off + n_in * n_out + n_out].split_at(n_in * n_out);
            let a = &acts[l];
            let mut z: Vec<f64> = (0..n_out)
                .map(|o| bias[o] + wts[o * n_in..(o + 1) * n_in].iter().zip(a).map(|(w, x)| w * x).sum::<f64>())
                .collect();
            if l < last {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            acts.push(z);
            off += n_in * n_out + n_out;
        }
        acts
    }
}

impl Network for Mlp {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).pop().expect("output layer")
    }

    fn sample_loss_grad(&self, x: &[f64], y: u8, grad: &mut [f64]) -> f64 {
        let acts = self.forward(x);
        let (loss, mut delta) = softmax_cross_entropy(acts.last().expect("output layer"), y);
        let mut offsets = Vec::with_capacity(self.layers.len() - 1);
        let mut off = 0;
        for w in self.layers.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        for l in (0..self.layers.len() - 1).rev() {
            let (n_in, n_out) = (self.layers[l], self.layers[l + 1]);
            let off = offsets[l];
            let a = &acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                    for (g, x) in row.iter_mut().zip(a) {
                        *g += d * x;
                    }
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let wts = &self.params[off..off + n_in * n_out];
                delta = (0..n_in)
                    .map(|i| {
                        if a[i] > 0.0 {
                            (0..n_out).map(|o| wts[o * n_in + i] * delta[o]).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
        loss
    }
}
