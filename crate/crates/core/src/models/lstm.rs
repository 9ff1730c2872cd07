use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, softmax_cross_entropy, uniform_init, Network};

/// Single-layer LSTM over `steps` time steps, final hidden state fed to a
/// ReLU readout layer and a 2-way softmax.
///
/// Parameter layout: gate weights `W (4H x (D + H))` with gate blocks ordered
/// input, forget, cell, output; gate bias `(4H)`; readout `R1 (F x H)`, `c1 (F)`;
/// output `R2 (2 x F)`, `c2 (2)`. Inputs are time-major rows of `steps * D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub input: usize,
    pub hidden: usize,
    pub readout: usize,
    pub steps: usize,
    pub params: Vec<f64>,
}

struct Offsets {
    w: usize,
    b: usize,
    r1: usize,
    c1: usize,
    r2: usize,
    c2: usize,
    end: usize,
}

struct Step {
    xh: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl Lstm {
    pub fn new<R: Rng>(input: usize, hidden: usize, readout: usize, steps: usize, rng: &mut R) -> Self {
        let mut net = Self {
            input,
            hidden,
            readout,
            steps,
            params: Vec::new(),
        };
        let o = net.offsets();
        let mut p = Vec::with_capacity(o.end);
        p.extend(uniform_init(rng, o.b - o.w, 1.0 / (hidden as f64).sqrt()));
        for gate in 0..4 {
            let fill = if gate == 1 { 1.0 } else { 0.0 };
            p.extend(std::iter::repeat_n(fill, hidden));
        }
        p.extend(uniform_init(rng, o.c1 - o.r1, (6.0 / hidden as f64).sqrt()));
        p.extend(std::iter::repeat_n(0.0, readout));
        p.extend(uniform_init(rng, o.c2 - o.r2, (6.0 / readout as f64).sqrt()));
        p.extend([0.0, 0.0]);
        net.params = p;
        net
    }

    fn offsets(&self) -> Offsets {
        let (d, h, f) = (self.input, self.hidden, self.readout);
        let w = 0;
        let b = w + 4 * h * (d + h);
        let r1 = b + 4 * h;
        let c1 = r1 + f * h;
        let r2 = c1 + f;
        let c2 = r2 + 2 * f;
        Offsets { w, b, r1, c1, r2, c2, end: c2 + 2 }
    }

    pub fn param_count(input: usize, hidden: usize, readout: usize) -> usize {
        4 * hidden * (input + hidden) + 4 * hidden + readout * hidden + readout + 2 * readout + 2
    }

    fn run(&self, x: &[f64]) -> (Vec<Step>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let (d, h) = (self.input, self.hidden);
        let o = self.offsets();
        let p = &self.params;
        let mut hs = vec![0.0; h];
        let mut cs = vec![0.0; h];
        let mut steps = Vec::with_capacity(self.steps);
        for t in 0..self.steps {
            let mut xh = x[t * d..(t + 1) * d].to_vec();
            xh.extend_from_slice(&hs);
            let width = d + h;
            let gate = |k: usize, j: usize| {
                let r = k * h + j;
                p[o.b + r] + p[o.w + r * width..o.w + (r + 1) * width].iter().zip(&xh).map(|(w, v)| w * v).sum::<f64>()
            };
            let i: Vec<f64> = (0..h).map(|j| sigmoid(gate(0, j))).collect();
            let f: Vec<f64> = (0..h).map(|j| sigmoid(gate(1, j))).collect();
            let g: Vec<f64> = (0..h).map(|j| gate(2, j).tanh()).collect();
            let og: Vec<f64> = (0..h).map(|j| sigmoid(gate(3, j))).collect();
            let c_prev = cs.clone();
            for j in 0..h {
                cs[j] = f[j] * c_prev[j] + i[j] * g[j];
            }
            let tanh_c: Vec<f64> = cs.iter().map(|c| c.tanh()).collect();
            for j in 0..h {
                hs[j] = og[j] * tanh_c[j];
            }
            steps.push(Step { xh, c_prev, i, f, g, o: og, tanh_c });
        }
        let a1: Vec<f64> = (0..self.readout)
            .map(|k| {
                let z = p[o.c1 + k] + p[o.r1 + k * h..o.r1 + (k + 1) * h].iter().zip(&hs).map(|(w, v)| w * v).sum::<f64>();
                z.max(0.0)
            })
            .collect();
        let logits: Vec<f64> = (0..2)
            .map(|k| {
                p[o.c2 + k]
                    + p[o.r2 + k * self.readout..o.r2 + (k + 1) * self.readout]
                        .iter()
                        .zip(&a1)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect();
        (steps, hs, a1, logits)
    }
}

impl Network for Lstm {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.run(x).3
    }

    fn sample_loss_grad(&self, x: &[f64], y: u8, grad: &mut [f64]) -> f64 {
        let (d, h, fr) = (self.input, self.hidden, self.readout);
        let o = self.offsets();
        let p = &self.params;
        let (steps, h_last, a1, logits) = self.run(x);
        let (loss, dz2) = softmax_cross_entropy(&logits, y);

        let mut da1 = vec![0.0; fr];
        for k in 0..2 {
            for (j, a) in a1.iter().enumerate() {
                grad[o.r2 + k * fr + j] += dz2[k] * a;
                da1[j] += p[o.r2 + k * fr + j] * dz2[k];
            }
            grad[o.c2 + k] += dz2[k];
        }
        let mut dh = vec![0.0; h];
        for k in 0..fr {
            if a1[k] <= 0.0 {
                continue;
            }
            let dz = da1[k];
            for j in 0..h {
                grad[o.r1 + k * h + j] += dz * h_last[j];
                dh[j] += p[o.r1 + k * h + j] * dz;
            }
            grad[o.c1 + k] += dz;
        }

        let width = d + h;
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for s in steps.iter().rev() {
            for j in 0..h {
                let d_o = dh[j] * s.tanh_c[j];
                let dc = dc_next[j] + dh[j] * s.o[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
                let di = dc * s.g[j];
                let dg = dc * s.i[j];
                let df = dc * s.c_prev[j];
                dc_next[j] = dc * s.f[j];
                dz[j] = di * s.i[j] * (1.0 - s.i[j]);
                dz[h + j] = df * s.f[j] * (1.0 - s.f[j]);
                dz[2 * h + j] = dg * (1.0 - s.g[j] * s.g[j]);
                dz[3 * h + j] = d_o * s.o[j] * (1.0 - s.o[j]);
            }
            let mut dxh = vec![0.0; width];
            for (r, &z) in dz.iter().enumerate() {
                if z == 0.0 {
                    continue;
                }
                let row = o.w + r * width;
                for c in 0..width {
                    grad[row + c] += z * s.xh[c];
                    dxh[c] += p[row + c] * z;
                }
                grad[o.b + r] += z;
            }
            dh.copy_from_slice(&dxh[d..]);
        }
        loss
    }
}
