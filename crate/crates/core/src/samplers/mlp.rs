//! Small fully connected networks trained full-batch with Adam.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const INIT_RANGE: f64 = 0.1;

/// A ReLU network with a linear output layer, optionally plus a direct
/// linear map from input to output.
///
/// `params` holds the layers in order. Each layer is its weight matrix,
/// row-major with shape `[out][in]`, followed by its `out` biases. The skip
/// weights, `[out][in]`, come last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub skip: bool,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn new(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output sizes");
        let n: usize = sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        let params = (0..n).map(|_| rng.random_range(-INIT_RANGE..=INIT_RANGE)).collect();
        Self {
            sizes: sizes.to_vec(),
            skip: false,
            params,
        }
    }

    /// Like [`Mlp::new`] with a zero-initialized skip connection.
    pub fn with_skip(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut net = Self::new(sizes, rng);
        let (n_in, n_out) = (net.input_dim(), net.output_dim());
        net.params.extend(std::iter::repeat_n(0.0, n_in * n_out));
        net.skip = true;
        net
    }

    fn skip_offset(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("nonempty sizes")
    }

    /// Activations of every layer, input first, output last.
    fn activations_plain(&self, input: &[f64]) -> Vec<Vec<f64>> {
        debug_assert_eq!(input.len(), self.input_dim());
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_vec());
        let mut offset = 0;
        let last = self.sizes.len() - 2;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_out * (n_in + 1)];
            let prev = &acts[l];
            let out: Vec<f64> = (0..n_out)
                .map(|j| {
                    let row = &weights[j * n_in..(j + 1) * n_in];
                    let z = biases[j] + row.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
                    if l < last {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
            offset += n_out * (n_in + 1);
        }
        acts
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.activations(input).pop().expect("output layer")
    }

    /// Activations of every layer, with the skip term folded into the output.
    fn activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = self.activations_plain(input);
        if self.skip {
            let n_in = self.input_dim();
            let w = &self.params[self.skip_offset()..];
            let out = acts.last_mut().expect("output layer");
            for (j, o) in out.iter_mut().enumerate() {
                *o += w[j * n_in..(j + 1) * n_in]
                    .iter()
                    .zip(input)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            }
        }
        acts
    }

    /// Adds the gradient of a loss with output gradient `grad_out` at
    /// `input` into `grads`, and returns the network output.
    pub fn accumulate_grad(&self, input: &[f64], grad_out: impl FnOnce(&[f64]) -> Vec<f64>, grads: &mut [f64]) {
        let acts = self.activations(input);
        let mut delta = grad_out(acts.last().expect("output layer"));
        if self.skip {
            let n_in = self.input_dim();
            let off = self.skip_offset();
            for (j, d) in delta.iter().enumerate() {
                for (g, a) in grads[off + j * n_in..off + (j + 1) * n_in].iter_mut().zip(input) {
                    *g += d * a;
                }
            }
        }
        let mut offsets = Vec::with_capacity(self.sizes.len() - 1);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[1] * (w[0] + 1);
        }
        for l in (0..self.sizes.len() - 1).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let prev = &acts[l];
            for j in 0..n_out {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grads[off + j * n_in..off + (j + 1) * n_in];
                for (g, a) in row.iter_mut().zip(prev) {
                    *g += d * a;
                }
                grads[off + n_in * n_out + j] += d;
            }
            if l == 0 {
                break;
            }
            let weights = &self.params[off..off + n_in * n_out];
            let mut next = vec![0.0; n_in];
            for (j, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                for (n, w) in next.iter_mut().zip(&weights[j * n_in..(j + 1) * n_in]) {
                    *n += d * w;
                }
            }
            // ReLU derivative on the hidden layer feeding this one.
            for (n, a) in next.iter_mut().zip(prev) {
                if *a <= 0.0 {
                    *n = 0.0;
                }
            }
            delta = next;
        }
    }
}

/// Adam with the usual default moments.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Per-dimension affine normalization fitted on training data. Constant
/// dimensions keep unit scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>], dim: usize) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let std = var
            .into_iter()
            .map(|v| if v.sqrt() < 1e-8 { 1.0 } else { v.sqrt() })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    pub fn invert(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| x * s + m)
            .collect()
    }
}

/// Runs `epochs` full-batch Adam steps on `net`. `grad_of` receives a sample
/// index and the network output and returns the output gradient of that
/// sample's loss; it is averaged over the batch.
pub fn train_full_batch(
    net: &mut Mlp,
    inputs: &[Vec<f64>],
    epochs: usize,
    lr: f64,
    grad_of: impl Fn(usize, &[f64]) -> Vec<f64>,
) {
    let all: Vec<usize> = (0..inputs.len()).collect();
    let cfg = TrainConfig {
        epochs,
        learning_rate: lr,
        weight_decay: 0.0,
    };
    train_with_holdout(net, inputs, &all, &[], cfg, grad_of, |_, _| 0.0);
}

/// Optimizer settings for [`train_with_holdout`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// L2 penalty on every parameter except a skip connection's weights.
    pub weight_decay: f64,
}

/// Full-batch Adam on the `train` indices. When `holdout` is non-empty the
/// parameters with the lowest total `loss_of` over it are kept.
pub fn train_with_holdout(
    net: &mut Mlp,
    inputs: &[Vec<f64>],
    train: &[usize],
    holdout: &[usize],
    cfg: TrainConfig,
    grad_of: impl Fn(usize, &[f64]) -> Vec<f64>,
    loss_of: impl Fn(usize, &[f64]) -> f64,
) {
    if train.is_empty() {
        return;
    }
    let TrainConfig {
        epochs,
        learning_rate,
        weight_decay,
    } = cfg;
    let scale = 1.0 / train.len() as f64;
    let mut adam = Adam::new(net.params.len(), learning_rate);
    let mut grads = vec![0.0; net.params.len()];
    let holdout_loss = |net: &Mlp| -> f64 { holdout.iter().map(|&i| loss_of(i, &net.forward(&inputs[i]))).sum() };
    let mut best = (!holdout.is_empty()).then(|| (holdout_loss(net), net.params.clone()));
    for _ in 0..epochs {
        grads.iter_mut().for_each(|g| *g = 0.0);
        for &i in train {
            net.accumulate_grad(
                &inputs[i],
                |out| grad_of(i, out).into_iter().map(|g| g * scale).collect(),
                &mut grads,
            );
        }
        if weight_decay > 0.0 {
            let decayed = if net.skip { net.skip_offset() } else { net.params.len() };
            for (g, p) in grads[..decayed].iter_mut().zip(&net.params) {
                *g += weight_decay * p;
            }
        }
        adam.step(&mut net.params, &grads);
        if let Some((best_loss, best_params)) = &mut best {
            let loss = holdout_loss(net);
            if loss < *best_loss {
                *best_loss = loss;
                best_params.clone_from(&net.params);
            }
        }
    }
    if let Some((_, params)) = best {
        net.params = params;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Mlp::new(&[3, 5, 4, 2], &mut rng);
        // Larger weights so that some ReLUs are active.
        net.params.iter_mut().for_each(|p| *p *= 10.0);
        let x = [0.3, -0.7, 1.1];
        let target = [0.5, -0.2];
        let loss = |n: &Mlp| -> f64 {
            n.forward(&x)
                .iter()
                .zip(&target)
                .map(|(o, t)| 0.5 * (o - t).powi(2))
                .sum()
        };
        let mut grads = vec![0.0; net.params.len()];
        net.accumulate_grad(
            &x,
            |out| out.iter().zip(&target).map(|(o, t)| o - t).collect(),
            &mut grads,
        );
        for (i, &analytic) in grads.iter().enumerate() {
            let h = 1e-6;
            let mut plus = net.clone();
            plus.params[i] += h;
            let mut minus = net.clone();
            minus.params[i] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((numeric - analytic).abs() < 1e-5, "param {i}: {numeric} vs {analytic}");
        }
    }

    #[test]
    fn skip_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = Mlp::with_skip(&[3, 4, 2], &mut rng);
        net.params.iter_mut().for_each(|p| *p = 10.0 * *p + 0.3);
        let x = [0.8, -0.4, 1.5];
        let target = [0.1, 0.9];
        let loss = |n: &Mlp| -> f64 {
            n.forward(&x)
                .iter()
                .zip(&target)
                .map(|(o, t)| 0.5 * (o - t).powi(2))
                .sum()
        };
        let mut grads = vec![0.0; net.params.len()];
        net.accumulate_grad(
            &x,
            |out| out.iter().zip(&target).map(|(o, t)| o - t).collect(),
            &mut grads,
        );
        for (i, &analytic) in grads.iter().enumerate() {
            let h = 1e-6;
            let mut plus = net.clone();
            plus.params[i] += h;
            let mut minus = net.clone();
            minus.params[i] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((numeric - analytic).abs() < 1e-5, "param {i}: {numeric} vs {analytic}");
        }
    }

    #[test]
    fn regression_fits_linear_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::new(&[1, 16, 1], &mut rng);
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0 - 1.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x[0] + 0.5).collect();
        train_full_batch(&mut net, &xs, 3000, 1e-2, |i, out| vec![out[0] - ys[i]]);
        for (x, y) in xs.iter().zip(&ys) {
            assert!((net.forward(x)[0] - y).abs() < 0.05);
        }
    }

    #[test]
    fn standardizer_round_trips_and_handles_constants() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(&rows, 2);
        assert_eq!(s.std, [1.0, 1.0]);
        assert_eq!(s.apply(&[3.0, 5.0]), [1.0, 0.0]);
        assert_eq!(s.invert(&s.apply(&[2.5, 7.0])), [2.5, 7.0]);
    }
}
