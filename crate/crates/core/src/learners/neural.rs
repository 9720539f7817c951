use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{NeuralNetParams, TrainData};
use crate::rng::rng_from_seed;

/// Fully connected softmax classifier: ReLU hidden layers, inverted dropout
/// between consecutive hidden layers, minibatch cross-entropy, adadelta
/// updates with a decaying learning-rate multiplier, He-normal init.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct NeuralModel {
    /// Layer sizes [d_in, hidden..., n_classes].
    dims: Vec<usize>,
    /// Per layer: weights (out x in, row-major) then biases (out).
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

struct AdaState {
    grad_sq: Vec<f64>,
    step_sq: Vec<f64>,
}

impl AdaState {
    fn new(len: usize) -> Self {
        AdaState {
            grad_sq: vec![0.0; len],
            step_sq: vec![0.0; len],
        }
    }

    /// Apply one adadelta update in place; `lr` scales the final step.
    fn apply(&mut self, theta: &mut [f64], grad: &[f64], rho: f64, eps: f64, lr: f64) {
        for i in 0..theta.len() {
            let g = grad[i];
            self.grad_sq[i] = rho * self.grad_sq[i] + (1.0 - rho) * g * g;
            let step = -((self.step_sq[i] + eps).sqrt() / (self.grad_sq[i] + eps).sqrt()) * g;
            self.step_sq[i] = rho * self.step_sq[i] + (1.0 - rho) * step * step;
            theta[i] += lr * step;
        }
    }
}

/// out[r, o] = sum_j a[r, j] * w[o, j] + b[o]  (w row-major out x in)
fn affine_forward(a: &[f64], w: &[f64], b: &[f64], bs: usize, d_in: usize, d_out: usize, out: &mut Vec<f64>) {
    out.clear();
    out.reserve(bs * d_out);
    for r in 0..bs {
        let row = &a[r * d_in..(r + 1) * d_in];
        for o in 0..d_out {
            let wrow = &w[o * d_in..(o + 1) * d_in];
            let mut acc = b[o];
            for j in 0..d_in {
                acc += row[j] * wrow[j];
            }
            out.push(acc);
        }
    }
}

pub(crate) fn fit(params: &NeuralNetParams, data: &TrainData, seed: u64) -> NeuralModel {
    let mut dims = Vec::with_capacity(params.hidden.len() + 2);
    dims.push(data.d);
    dims.extend_from_slice(&params.hidden);
    dims.push(data.n_classes);
    let n_layers = dims.len() - 1;
    let n_hidden = params.hidden.len();

    let mut rng = rng_from_seed(seed);
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
    let mut biases: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let scale = (2.0 / fan_in as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        weights.push(w);
        biases.push(vec![0.0; fan_out]);
    }

    let mut w_state: Vec<AdaState> = weights.iter().map(|w| AdaState::new(w.len())).collect();
    let mut b_state: Vec<AdaState> = biases.iter().map(|b| AdaState::new(b.len())).collect();

    let keep = 1.0 - params.dropout;
    let mut order: Vec<usize> = (0..data.n).collect();
    let mut lr = params.learning_rate;

    // Per-batch scratch, reused across steps.
    let mut acts: Vec<Vec<f64>> = vec![Vec::new(); n_layers + 1];
    let mut masks: Vec<Vec<f64>> = vec![Vec::new(); n_layers];
    let mut deltas: Vec<f64> = Vec::new();
    let mut prev_delta: Vec<f64> = Vec::new();
    let mut grad_w: Vec<f64> = Vec::new();
    let mut grad_b: Vec<f64> = Vec::new();

    for _epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(params.batch_size) {
            let bs = chunk.len();
            // Gather the batch.
            let a0 = &mut acts[0];
            a0.clear();
            for &i in chunk {
                a0.extend_from_slice(data.row(i));
            }

            // Forward.
            for l in 0..n_layers {
                let (lo, hi) = acts.split_at_mut(l + 1);
                let a_in = &lo[l];
                let a_out = &mut hi[0];
                affine_forward(a_in, &weights[l], &biases[l], bs, dims[l], dims[l + 1], a_out);
                if l < n_layers - 1 {
                    for v in a_out.iter_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                    // Dropout only between hidden layers (not after the last
                    // hidden layer, and never on the input).
                    if l + 1 < n_hidden {
                        let mask = &mut masks[l];
                        mask.clear();
                        mask.resize(bs * dims[l + 1], 0.0);
                        for (v, m) in a_out.iter_mut().zip(mask.iter_mut()) {
                            if rng.gen::<f64>() < keep {
                                *m = 1.0 / keep;
                                *v *= *m;
                            } else {
                                *v = 0.0;
                            }
                        }
                    } else {
                        masks[l].clear();
                    }
                }
            }

            // Softmax + mean cross-entropy gradient at the output.
            let c = dims[n_layers];
            let logits = &acts[n_layers];
            deltas.clear();
            deltas.reserve(bs * c);
            for r in 0..bs {
                let row = &logits[r * c..(r + 1) * c];
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut denom = 0.0;
                for &v in row {
                    denom += (v - max).exp();
                }
                let label = data.y[chunk[r]];
                for (k, &v) in row.iter().enumerate() {
                    let p = (v - max).exp() / denom;
                    deltas.push((p - if k == label { 1.0 } else { 0.0 }) / bs as f64);
                }
            }

            // Backward.
            for l in (0..n_layers).rev() {
                let (d_in, d_out) = (dims[l], dims[l + 1]);
                let a_in = &acts[l];

                grad_w.clear();
                grad_w.resize(d_out * d_in, 0.0);
                grad_b.clear();
                grad_b.resize(d_out, 0.0);
                for r in 0..bs {
                    let drow = &deltas[r * d_out..(r + 1) * d_out];
                    let arow = &a_in[r * d_in..(r + 1) * d_in];
                    for o in 0..d_out {
                        let dv = drow[o];
                        if dv == 0.0 {
                            continue;
                        }
                        grad_b[o] += dv;
                        let gw = &mut grad_w[o * d_in..(o + 1) * d_in];
                        for j in 0..d_in {
                            gw[j] += dv * arow[j];
                        }
                    }
                }

                if l > 0 {
                    // delta_in[r, j] = sum_o delta[r, o] * w[o, j], masked by
                    // ReLU slope and the dropout mask of layer l-1's output.
                    prev_delta.clear();
                    prev_delta.resize(bs * d_in, 0.0);
                    for r in 0..bs {
                        let drow = &deltas[r * d_out..(r + 1) * d_out];
                        let prow = &mut prev_delta[r * d_in..(r + 1) * d_in];
                        for o in 0..d_out {
                            let dv = drow[o];
                            if dv == 0.0 {
                                continue;
                            }
                            let wrow = &weights[l][o * d_in..(o + 1) * d_in];
                            for j in 0..d_in {
                                prow[j] += dv * wrow[j];
                            }
                        }
                    }
                    let a_prev = &acts[l];
                    let mask = &masks[l - 1];
                    for (idx, pd) in prev_delta.iter_mut().enumerate() {
                        // a_prev holds post-ReLU (and post-mask) activations:
                        // zero exactly where the gradient must not flow.
                        if a_prev[idx] == 0.0 {
                            *pd = 0.0;
                        } else if !mask.is_empty() {
                            *pd *= mask[idx];
                        }
                    }
                    std::mem::swap(&mut deltas, &mut prev_delta);
                }

                w_state[l].apply(&mut weights[l], &grad_w, params.rho, params.epsilon, lr);
                b_state[l].apply(&mut biases[l], &grad_b, params.rho, params.epsilon, lr);
            }
        }
        lr *= 1.0 - params.lr_decay_per_epoch;
    }

    NeuralModel {
        dims,
        weights,
        biases,
    }
}

impl NeuralModel {
    pub fn predict(&self, x: &[f64], n: usize, d: usize) -> Vec<usize> {
        debug_assert_eq!(d, self.dims[0]);
        let n_layers = self.dims.len() - 1;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in 0..n_layers {
            affine_forward(
                &cur,
                &self.weights[l],
                &self.biases[l],
                n,
                self.dims[l],
                self.dims[l + 1],
                &mut next,
            );
            if l < n_layers - 1 {
                for v in next.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        let c = self.dims[n_layers];
        (0..n)
            .map(|r| {
                let row = &cur[r * c..(r + 1) * c];
                let mut best = 0usize;
                let mut best_v = f64::NEG_INFINITY;
                for (k, &v) in row.iter().enumerate() {
                    if v > best_v {
                        best_v = v;
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}
