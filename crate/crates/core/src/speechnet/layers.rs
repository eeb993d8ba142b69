//! Layers of the speech-emotion network with explicit forward and backward
//! passes. Activations are stored time-major: element `(t, c)` of a sequence
//! with `C` channels lives at `t * C + c`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with four fixed accumulators; the summation order depends only
/// on the length, never on the CPU.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

fn he_normal<R: Rng>(n: usize, fan_in: usize, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
    (0..n).map(|_| normal.sample(rng)).collect()
}

/// Valid, stride-1 1D convolution. Weights are laid out `[kernel][in][out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1d {
    pub fn he_init<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: he_normal(
                kernel * in_channels * out_channels,
                kernel * in_channels,
                rng,
            ),
            bias: vec![0.0; out_channels],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn out_len(&self, in_len: usize) -> usize {
        in_len + 1 - self.kernel
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let (c, o) = (self.in_channels, self.out_channels);
        let l_out = self.out_len(input.len() / c);
        let span = self.kernel * c;
        let mut out = vec![0.0; l_out * o];
        for t in 0..l_out {
            let row = &mut out[t * o..(t + 1) * o];
            row.copy_from_slice(&self.bias);
            let window = &input[t * c..t * c + span];
            for (j, &a) in window.iter().enumerate() {
                if a != 0.0 {
                    axpy(row, a, &self.weight[j * o..(j + 1) * o]);
                }
            }
        }
        out
    }

    /// Accumulates weight and bias gradients; when `d_input` is given also
    /// accumulates the input gradient. With `skip_zero_inputs`, input
    /// positions holding exactly zero (ReLU-inactive) get no input gradient.
    pub fn backward(
        &self,
        input: &[f64],
        d_out: &[f64],
        d_weight: &mut [f64],
        d_bias: &mut [f64],
        mut d_input: Option<&mut [f64]>,
        skip_zero_inputs: bool,
    ) {
        let (c, o) = (self.in_channels, self.out_channels);
        let l_out = d_out.len() / o;
        let span = self.kernel * c;
        for t in 0..l_out {
            let g = &d_out[t * o..(t + 1) * o];
            axpy(d_bias, 1.0, g);
            let window = &input[t * c..t * c + span];
            for (j, &a) in window.iter().enumerate() {
                if a != 0.0 {
                    axpy(&mut d_weight[j * o..(j + 1) * o], a, g);
                }
                if let Some(di) = d_input.as_deref_mut() {
                    if !(skip_zero_inputs && a == 0.0) {
                        di[t * c + j] += dot(&self.weight[j * o..(j + 1) * o], g);
                    }
                }
            }
        }
    }
}

/// Per-channel batch normalization over batch and time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

/// Saved normalization state for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub x_hat: Vec<Vec<f64>>,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pub train: bool,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.9,
            eps: 1e-5,
        }
    }

    pub fn trainable_count(&self) -> usize {
        2 * self.channels
    }

    pub fn non_trainable_count(&self) -> usize {
        2 * self.channels
    }

    /// Normalizes each sequence in `xs` (time-major, `channels` wide). Train
    /// mode uses batch statistics (biased variance); eval mode uses running
    /// statistics. Returns outputs and the cache.
    pub fn forward(&self, xs: &[Vec<f64>], train: bool) -> (Vec<Vec<f64>>, BnCache) {
        let ch = self.channels;
        let (mean, var) = if train {
            let mut sum = vec![0.0; ch];
            let mut count = 0usize;
            for x in xs {
                for row in x.chunks_exact(ch) {
                    axpy(&mut sum, 1.0, row);
                }
                count += x.len() / ch;
            }
            let n = count as f64;
            let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
            let mut sq = vec![0.0; ch];
            for x in xs {
                for row in x.chunks_exact(ch) {
                    for ((s, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                        let d = v - m;
                        *s += d * d;
                    }
                }
            }
            (mean, sq.iter().map(|s| s / n).collect::<Vec<f64>>())
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut x_hat = Vec::with_capacity(xs.len());
        let mut out = Vec::with_capacity(xs.len());
        for x in xs {
            let mut xh = vec![0.0; x.len()];
            let mut y = vec![0.0; x.len()];
            for ((xr, hr), yr) in x
                .chunks_exact(ch)
                .zip(xh.chunks_exact_mut(ch))
                .zip(y.chunks_exact_mut(ch))
            {
                for c in 0..ch {
                    hr[c] = (xr[c] - mean[c]) * inv_std[c];
                    yr[c] = self.gamma[c] * hr[c] + self.beta[c];
                }
            }
            x_hat.push(xh);
            out.push(y);
        }
        let cache = BnCache {
            x_hat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
            train,
        };
        (out, cache)
    }

    /// Blends batch statistics into the running statistics.
    pub fn update_running(&mut self, cache: &BnCache) {
        if !cache.train {
            return;
        }
        let m = self.momentum;
        for c in 0..self.channels {
            self.running_mean[c] = m * self.running_mean[c] + (1.0 - m) * cache.batch_mean[c];
            self.running_var[c] = m * self.running_var[c] + (1.0 - m) * cache.batch_var[c];
        }
    }

    /// Returns input gradients; accumulates into `d_gamma` / `d_beta`.
    pub fn backward(
        &self,
        cache: &BnCache,
        d_out: &[Vec<f64>],
        d_gamma: &mut [f64],
        d_beta: &mut [f64],
    ) -> Vec<Vec<f64>> {
        let ch = self.channels;
        let mut sum_dy = vec![0.0; ch];
        let mut sum_dy_xhat = vec![0.0; ch];
        let mut count = 0usize;
        for (dy, xh) in d_out.iter().zip(&cache.x_hat) {
            for (dr, hr) in dy.chunks_exact(ch).zip(xh.chunks_exact(ch)) {
                for c in 0..ch {
                    sum_dy[c] += dr[c];
                    sum_dy_xhat[c] += dr[c] * hr[c];
                }
            }
            count += dy.len() / ch;
        }
        for c in 0..ch {
            d_gamma[c] += sum_dy_xhat[c];
            d_beta[c] += sum_dy[c];
        }
        let n = count as f64;
        d_out
            .iter()
            .zip(&cache.x_hat)
            .map(|(dy, xh)| {
                let mut dx = vec![0.0; dy.len()];
                for ((dr, hr), xr) in dy
                    .chunks_exact(ch)
                    .zip(xh.chunks_exact(ch))
                    .zip(dx.chunks_exact_mut(ch))
                {
                    for c in 0..ch {
                        let g = self.gamma[c] * cache.inv_std[c];
                        xr[c] = if cache.train {
                            // dx = g/N * (N dy - sum dy - x_hat * sum(dy x_hat))
                            g * (dr[c] - sum_dy[c] / n - hr[c] * sum_dy_xhat[c] / n)
                        } else {
                            g * dr[c]
                        };
                    }
                }
                dx
            })
            .collect()
    }
}

/// Fully connected layer, weights laid out `[in][out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn he_init<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            inputs,
            outputs,
            weight: he_normal(inputs * outputs, inputs, rng),
            bias: vec![0.0; outputs],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let o = self.outputs;
        let mut out = self.bias.clone();
        for (i, &a) in x.iter().enumerate() {
            if a != 0.0 {
                axpy(&mut out, a, &self.weight[i * o..(i + 1) * o]);
            }
        }
        out
    }

    /// Accumulates parameter gradients over the batch. Input gradients are
    /// returned when requested; with `skip_zero_inputs` inputs equal to zero
    /// get a zero gradient.
    pub fn backward(
        &self,
        xs: &[Vec<f64>],
        d_out: &[Vec<f64>],
        d_weight: &mut [f64],
        d_bias: &mut [f64],
        want_input_grad: bool,
        skip_zero_inputs: bool,
    ) -> Option<Vec<Vec<f64>>> {
        let o = self.outputs;
        for (x, g) in xs.iter().zip(d_out) {
            axpy(d_bias, 1.0, g);
            for (i, &a) in x.iter().enumerate() {
                if a != 0.0 {
                    axpy(&mut d_weight[i * o..(i + 1) * o], a, g);
                }
            }
        }
        want_input_grad.then(|| {
            xs.iter()
                .zip(d_out)
                .map(|(x, g)| {
                    x.iter()
                        .enumerate()
                        .map(|(i, &a)| {
                            if skip_zero_inputs && a == 0.0 {
                                0.0
                            } else {
                                dot(&self.weight[i * o..(i + 1) * o], g)
                            }
                        })
                        .collect()
                })
                .collect()
        })
    }
}
