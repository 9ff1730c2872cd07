use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{softmax_cross_entropy, uniform_init, ModelError, Network};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoder {
    /// Evenly spaced spikes: step `t` fires iff `floor((t+1)x) > floor(tx)`.
    #[default]
    Deterministic,
    /// Independent spikes with probability `x`, from a stream frozen per input.
    Bernoulli,
}

/// Forward spike nonlinearity. `Relaxed` replaces the step by the fast
/// sigmoid `v / (1 + k|v|)`, whose derivative is exactly the surrogate, so
/// finite differences of the relaxed loss check the backward pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeFn {
    #[default]
    Heaviside,
    Relaxed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifParams {
    pub timesteps: usize,
    /// Membrane decay per step.
    pub beta: f64,
    pub threshold: f64,
    /// Fast-sigmoid surrogate slope.
    pub slope: f64,
    pub encoder: Encoder,
    pub encoder_seed: u64,
    pub spike_fn: SpikeFn,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            timesteps: 25,
            beta: 0.9,
            threshold: 1.0,
            slope: 25.0,
            encoder: Encoder::Deterministic,
            encoder_seed: 0x5eed,
            spike_fn: SpikeFn::Heaviside,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(ModelError::Config(format!("beta must be in (0, 1), got {}", self.beta)));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(ModelError::Config(format!("threshold must be positive, got {}", self.threshold)));
        }
        if self.timesteps == 0 {
            return Err(ModelError::Config("timesteps must be at least 1".into()));
        }
        if !(self.slope > 0.0 && self.slope.is_finite()) {
            return Err(ModelError::Config(format!("slope must be positive, got {}", self.slope)));
        }
        Ok(())
    }
}

/// Rate-codes `x` (clamped to [0, 1]) into `timesteps` spikes.
pub fn rate_encode(x: f64, timesteps: usize, encoder: Encoder, rng: &mut impl Rng) -> Vec<f64> {
    let x = x.clamp(0.0, 1.0);
    (0..timesteps)
        .map(|t| {
            let fire = match encoder {
                Encoder::Deterministic => ((t + 1) as f64 * x).floor() > (t as f64 * x).floor(),
                Encoder::Bernoulli => rng.gen::<f64>() < x,
            };
            f64::from(u8::from(fire))
        })
        .collect()
}

/// One leaky integrate-and-fire update with subtractive reset:
/// `v = beta*u + i`, `spike = v >= theta`, `u' = v - spike*theta`.
pub fn lif_step(u: f64, input: f64, beta: f64, threshold: f64) -> (f64, bool) {
    let v = beta * u + input;
    let spike = v >= threshold;
    (v - if spike { threshold } else { 0.0 }, spike)
}

/// Derivative of the fast sigmoid `x / (1 + k|x|)`.
pub fn surrogate_grad(x: f64, slope: f64) -> f64 {
    let d = 1.0 + slope * x.abs();
    1.0 / (d * d)
}

fn fnv1a(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Feed-forward LIF network over `timesteps` steps; the class is the output
/// neuron with the most spikes. Inputs are min-max scaled with training-split
/// bounds before rate coding.
///
/// Parameter layout per layer: `W (out x in, row-major), b (out)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snn {
    pub layers: Vec<usize>,
    pub lif: LifParams,
    pub input_min: Vec<f64>,
    pub input_max: Vec<f64>,
    pub params: Vec<f64>,
}

struct Trace {
    /// `acts[l][t]`: spikes entering layer `l` at step `t` (`acts[0]` is the encoded input).
    acts: Vec<Vec<Vec<f64>>>,
    /// `v[l][t]`: pre-reset membrane potential of layer `l + 1`.
    v: Vec<Vec<Vec<f64>>>,
    counts: Vec<f64>,
    membrane_sum: Vec<f64>,
}

impl Snn {
    pub fn new<R: Rng>(layers: Vec<usize>, lif: LifParams, input_min: Vec<f64>, input_max: Vec<f64>, rng: &mut R) -> Self {
        let mut params = Vec::new();
        for w in layers.windows(2) {
            let bound = (6.0 / w[0].max(1) as f64).sqrt();
            params.extend(uniform_init(rng, w[0] * w[1], bound));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Self {
            layers,
            lif,
            input_min,
            input_max,
            params,
        }
    }

    pub fn scale(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.input_min.iter().zip(&self.input_max))
            .map(|(&v, (&lo, &hi))| if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 })
            .collect()
    }

    /// Input spike trains, indexed `[t][feature]`.
    pub fn encode(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let scaled = self.scale(x);
        let mut rng = ChaCha8Rng::seed_from_u64(self.lif.encoder_seed ^ fnv1a(&scaled));
        let trains: Vec<Vec<f64>> = scaled
            .iter()
            .map(|&s| rate_encode(s, self.lif.timesteps, self.lif.encoder, &mut rng))
            .collect();
        (0..self.lif.timesteps)
            .map(|t| trains.iter().map(|tr| tr[t]).collect())
            .collect()
    }

    fn spike(&self, v: f64) -> f64 {
        let x = v - self.lif.threshold;
        match self.lif.spike_fn {
            SpikeFn::Heaviside => f64::from(u8::from(x >= 0.0)),
            SpikeFn::Relaxed => x / (1.0 + self.lif.slope * x.abs()),
        }
    }

    fn run(&self, x: &[f64]) -> Trace {
        let n_layers = self.layers.len() - 1;
        let steps = self.lif.timesteps;
        let mut acts = vec![self.encode(x)];
        acts.extend((0..n_layers).map(|_| Vec::with_capacity(steps)));
        let mut v = vec![Vec::with_capacity(steps); n_layers];
        let mut u: Vec<Vec<f64>> = self.layers[1..].iter().map(|&n| vec![0.0; n]).collect();
        let mut off = Vec::with_capacity(n_layers);
        let mut o = 0;
        for w in self.layers.windows(2) {
            off.push(o);
            o += w[0] * w[1] + w[1];
        }
        let n_out = *self.layers.last().expect("output layer");
        let mut counts = vec![0.0; n_out];
        let mut membrane_sum = vec![0.0; n_out];
        for t in 0..steps {
            for l in 0..n_layers {
                let (n_in, n_o) = (self.layers[l], self.layers[l + 1]);
                let w = &self.params[off[l]..off[l] + n_in * n_o];
                let b = &self.params[off[l] + n_in * n_o..off[l] + n_in * n_o + n_o];
                let input = &acts[l][t];
                let mut vt = Vec::with_capacity(n_o);
                let mut st = Vec::with_capacity(n_o);
                for j in 0..n_o {
                    let i = b[j] + w[j * n_in..(j + 1) * n_in].iter().zip(input).map(|(a, s)| a * s).sum::<f64>();
                    let vj = self.lif.beta * u[l][j] + i;
                    let sj = self.spike(vj);
                    u[l][j] = vj - self.lif.threshold * sj;
                    vt.push(vj);
                    st.push(sj);
                }
                if l == n_layers - 1 {
                    for j in 0..n_o {
                        counts[j] += st[j];
                        membrane_sum[j] += vt[j];
                    }
                }
                v[l].push(vt);
                acts[l + 1].push(st);
            }
        }
        Trace {
            acts,
            v,
            counts,
            membrane_sum,
        }
    }

    /// Output spike counts, each in `[0, timesteps]` for the step nonlinearity.
    pub fn spike_counts(&self, x: &[f64]) -> Vec<f64> {
        self.run(x).counts
    }
}

impl Network for Snn {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.run(x).counts
    }

    /// Argmax of spike counts; ties go to the larger summed output membrane
    /// potential, then to Benign.
    fn predict(&self, x: &[f64]) -> u8 {
        let tr = self.run(x);
        let key = |k: usize| (tr.counts[k], tr.membrane_sum[k]);
        u8::from(key(1) > key(0))
    }

    fn sample_loss_grad(&self, x: &[f64], y: u8, grad: &mut [f64]) -> f64 {
        let tr = self.run(x);
        let (loss, dcounts) = softmax_cross_entropy(&tr.counts, y);
        let n_layers = self.layers.len() - 1;
        let (beta, theta, k) = (self.lif.beta, self.lif.threshold, self.lif.slope);
        let mut off = Vec::with_capacity(n_layers);
        let mut o = 0;
        for w in self.layers.windows(2) {
            off.push(o);
            o += w[0] * w[1] + w[1];
        }
        // Gradient flowing into U[l][t] from step t + 1.
        let mut du: Vec<Vec<f64>> = self.layers[1..].iter().map(|&n| vec![0.0; n]).collect();
        for t in (0..self.lif.timesteps).rev() {
            let mut ds_from_above: Vec<f64> = dcounts.clone();
            for l in (0..n_layers).rev() {
                let (n_in, n_o) = (self.layers[l], self.layers[l + 1]);
                let input = &tr.acts[l][t];
                let mut d_input = vec![0.0; n_in];
                for j in 0..n_o {
                    let vj = tr.v[l][t][j];
                    let g_s = ds_from_above[j] - theta * du[l][j];
                    let dv = du[l][j] + g_s * surrogate_grad(vj - theta, k);
                    du[l][j] = beta * dv;
                    if dv == 0.0 {
                        continue;
                    }
                    let row = off[l] + j * n_in;
                    for i in 0..n_in {
                        grad[row + i] += dv * input[i];
                        d_input[i] += self.params[row + i] * dv;
                    }
                    grad[off[l] + n_in * n_o + j] += dv;
                }
                ds_from_above = d_input;
            }
        }
        loss
    }
}
