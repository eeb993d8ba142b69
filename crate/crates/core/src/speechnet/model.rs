//! The speech-emotion network:
//!
//! ```text
//! [B,180] -> conv(128,k20) -> BN -> ReLU -> conv(64,k10) -> BN -> ReLU
//!         -> flatten [B,9728] -> dense(520) -> dense(8) -> softmax
//! ```

use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm, BnCache, Conv1d, Dense};
use crate::dsp::SPEECH_FEATURE_LEN;
use crate::emotion::softmax;
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

pub const INPUT_LEN: usize = SPEECH_FEATURE_LEN;
pub const CONV1_FILTERS: usize = 128;
pub const CONV1_KERNEL: usize = 20;
pub const CONV1_OUT_LEN: usize = INPUT_LEN - CONV1_KERNEL + 1;
pub const CONV2_FILTERS: usize = 64;
pub const CONV2_KERNEL: usize = 10;
pub const CONV2_OUT_LEN: usize = CONV1_OUT_LEN - CONV2_KERNEL + 1;
pub const FLAT_LEN: usize = CONV2_OUT_LEN * CONV2_FILTERS;
pub const HIDDEN: usize = 520;
pub const N_SPEECH_CLASSES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCounts {
    pub total: usize,
    pub trainable: usize,
    pub non_trainable: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub conv1: Conv1d,
    pub bn1: BatchNorm,
    pub conv2: Conv1d,
    pub bn2: BatchNorm,
    pub dense1: Dense,
    pub dense2: Dense,
    pub mode: Mode,
}

/// Gradients of every trainable tensor, in [`CnnModel::TRAINABLE`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn zeros_like(model: &CnnModel) -> Self {
        Self(
            model
                .trainable()
                .iter()
                .map(|(_, t)| vec![0.0; t.len()])
                .collect(),
        )
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Activations saved by [`CnnModel::forward_cached`] for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub mode: Mode,
    pub(super) inputs: Vec<Vec<f64>>,
    pub(super) bn1: BnCache,
    pub(super) a1: Vec<Vec<f64>>,
    pub(super) bn2: BnCache,
    pub(super) a2: Vec<Vec<f64>>,
    pub(super) hidden: Vec<Vec<f64>>,
    pub logits: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
}

fn relu(xs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    xs.into_iter()
        .map(|x| x.into_iter().map(|v| v.max(0.0)).collect())
        .collect()
}

/// Zeroes gradient entries whose forward activation was clipped by ReLU.
fn relu_mask(grads: &mut [Vec<f64>], activations: &[Vec<f64>]) {
    for (g, a) in grads.iter_mut().zip(activations) {
        for (gi, ai) in g.iter_mut().zip(a) {
            if *ai <= 0.0 {
                *gi = 0.0;
            }
        }
    }
}

impl CnnModel {
    pub const TRAINABLE: [&'static str; 12] = [
        "conv1.weight",
        "conv1.bias",
        "bn1.gamma",
        "bn1.beta",
        "conv2.weight",
        "conv2.bias",
        "bn2.gamma",
        "bn2.beta",
        "dense1.weight",
        "dense1.bias",
        "dense2.weight",
        "dense2.bias",
    ];
    pub const NON_TRAINABLE: [&'static str; 4] = [
        "bn1.running_mean",
        "bn1.running_var",
        "bn2.running_mean",
        "bn2.running_var",
    ];

    /// He-normal weights, zero biases, unit BN scale, zero shift, running
    /// statistics (0, 1).
    pub fn init(seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        Self {
            conv1: Conv1d::he_init(1, CONV1_FILTERS, CONV1_KERNEL, &mut rng),
            bn1: BatchNorm::new(CONV1_FILTERS),
            conv2: Conv1d::he_init(CONV1_FILTERS, CONV2_FILTERS, CONV2_KERNEL, &mut rng),
            bn2: BatchNorm::new(CONV2_FILTERS),
            dense1: Dense::he_init(FLAT_LEN, HIDDEN, &mut rng),
            dense2: Dense::he_init(HIDDEN, N_SPEECH_CLASSES, &mut rng),
            mode: Mode::Eval,
        }
    }

    pub fn param_counts(&self) -> ParamCounts {
        let trainable: usize = self.trainable().iter().map(|(_, t)| t.len()).sum();
        let non_trainable = self.bn1.non_trainable_count() + self.bn2.non_trainable_count();
        ParamCounts {
            total: trainable + non_trainable,
            trainable,
            non_trainable,
        }
    }

    /// Output shape of each layer for batch size one, as `(name, [len, channels])`
    /// or `(name, [width])`.
    pub fn layer_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let l1 = self.conv1.out_len(INPUT_LEN);
        let l2 = self.conv2.out_len(l1);
        vec![
            ("input", vec![INPUT_LEN]),
            ("conv1", vec![l1, self.conv1.out_channels]),
            ("bn1", vec![l1, self.conv1.out_channels]),
            ("conv2", vec![l2, self.conv2.out_channels]),
            ("bn2", vec![l2, self.conv2.out_channels]),
            ("flatten", vec![l2 * self.conv2.out_channels]),
            ("dense1", vec![self.dense1.outputs]),
            ("dense2", vec![self.dense2.outputs]),
        ]
    }

    pub fn trainable(&self) -> [(&'static str, &[f64]); 12] {
        let t = Self::TRAINABLE;
        [
            (t[0], &self.conv1.weight),
            (t[1], &self.conv1.bias),
            (t[2], &self.bn1.gamma),
            (t[3], &self.bn1.beta),
            (t[4], &self.conv2.weight),
            (t[5], &self.conv2.bias),
            (t[6], &self.bn2.gamma),
            (t[7], &self.bn2.beta),
            (t[8], &self.dense1.weight),
            (t[9], &self.dense1.bias),
            (t[10], &self.dense2.weight),
            (t[11], &self.dense2.bias),
        ]
    }

    pub fn trainable_mut(&mut self) -> [&mut Vec<f64>; 12] {
        [
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
            &mut self.dense1.weight,
            &mut self.dense1.bias,
            &mut self.dense2.weight,
            &mut self.dense2.bias,
        ]
    }

    pub fn non_trainable(&self) -> [(&'static str, &[f64]); 4] {
        let t = Self::NON_TRAINABLE;
        [
            (t[0], &self.bn1.running_mean),
            (t[1], &self.bn1.running_var),
            (t[2], &self.bn2.running_mean),
            (t[3], &self.bn2.running_var),
        ]
    }

    pub fn non_trainable_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.bn1.running_mean,
            &mut self.bn1.running_var,
            &mut self.bn2.running_mean,
            &mut self.bn2.running_var,
        ]
    }

    fn check_inputs<T: AsRef<[f64]>>(inputs: &[T]) -> Result<()> {
        if inputs.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        for (i, x) in inputs.iter().enumerate() {
            if x.as_ref().len() != INPUT_LEN {
                return Err(Error::invalid(format!(
                    "sample {i} has {} features, expected {INPUT_LEN}",
                    x.as_ref().len()
                )));
            }
        }
        Ok(())
    }

    pub fn forward_cached<T: AsRef<[f64]>>(
        &self,
        inputs: &[T],
        mode: Mode,
    ) -> Result<ForwardCache> {
        Self::check_inputs(inputs)?;
        let train = mode == Mode::Train;
        let inputs: Vec<Vec<f64>> = inputs.iter().map(|x| x.as_ref().to_vec()).collect();
        let z1: Vec<Vec<f64>> = inputs.iter().map(|x| self.conv1.forward(x)).collect();
        let (y1, bn1) = self.bn1.forward(&z1, train);
        let a1 = relu(y1);
        let z2: Vec<Vec<f64>> = a1.iter().map(|x| self.conv2.forward(x)).collect();
        let (y2, bn2) = self.bn2.forward(&z2, train);
        let a2 = relu(y2);
        let hidden: Vec<Vec<f64>> = a2.iter().map(|x| self.dense1.forward(x)).collect();
        let logits: Vec<Vec<f64>> = hidden.iter().map(|h| self.dense2.forward(h)).collect();
        let probs = logits.iter().map(|z| softmax(z)).collect();
        Ok(ForwardCache {
            mode,
            inputs,
            bn1,
            a1,
            bn2,
            a2,
            hidden,
            logits,
            probs,
        })
    }

    /// Class probabilities for each input row.
    pub fn forward<T: AsRef<[f64]>>(&self, inputs: &[T], mode: Mode) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward_cached(inputs, mode)?.probs)
    }

    pub fn predict<T: AsRef<[f64]>>(&self, inputs: &[T]) -> Result<Vec<Vec<f64>>> {
        self.forward(inputs, Mode::Eval)
    }

    /// Backpropagates `d_logits` (one row per sample) to every trainable tensor.
    pub fn backward(&self, cache: &ForwardCache, d_logits: &[Vec<f64>]) -> Gradients {
        let mut g = Gradients::zeros_like(self);
        let [g_c1w, g_c1b, g_bn1g, g_bn1b, g_c2w, g_c2b, g_bn2g, g_bn2b, g_d1w, g_d1b, g_d2w, g_d2b] =
            &mut g.0[..]
        else {
            unreachable!()
        };

        let d_hidden = self
            .dense2
            .backward(&cache.hidden, d_logits, g_d2w, g_d2b, true, false)
            .expect("input grad requested");
        let mut d_a2 = self
            .dense1
            .backward(&cache.a2, &d_hidden, g_d1w, g_d1b, true, true)
            .expect("input grad requested");
        relu_mask(&mut d_a2, &cache.a2);
        let d_z2 = self.bn2.backward(&cache.bn2, &d_a2, g_bn2g, g_bn2b);

        let mut d_a1: Vec<Vec<f64>> = cache.a1.iter().map(|a| vec![0.0; a.len()]).collect();
        for ((a1, dz2), da1) in cache.a1.iter().zip(&d_z2).zip(d_a1.iter_mut()) {
            self.conv2.backward(a1, dz2, g_c2w, g_c2b, Some(da1), true);
        }
        relu_mask(&mut d_a1, &cache.a1);
        let d_z1 = self.bn1.backward(&cache.bn1, &d_a1, g_bn1g, g_bn1b);
        for (x, dz1) in cache.inputs.iter().zip(&d_z1) {
            self.conv1.backward(x, dz1, g_c1w, g_c1b, None, false);
        }
        g
    }

    /// Backpropagates a gradient given with respect to the softmax outputs.
    pub fn backward_from_probs(&self, cache: &ForwardCache, d_probs: &[Vec<f64>]) -> Gradients {
        let d_logits: Vec<Vec<f64>> = cache
            .probs
            .iter()
            .zip(d_probs)
            .map(|(p, dp)| {
                let inner: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
                p.iter()
                    .zip(dp)
                    .map(|(pi, dpi)| pi * (dpi - inner))
                    .collect()
            })
            .collect();
        self.backward(cache, &d_logits)
    }

    /// Mean categorical cross-entropy and its gradient in train mode.
    pub fn loss_and_gradients<T: AsRef<[f64]>>(
        &self,
        inputs: &[T],
        labels: &[usize],
    ) -> Result<(f64, Gradients, ForwardCache)> {
        if inputs.len() != labels.len() {
            return Err(Error::invalid("batch and labels differ in length"));
        }
        if let Some(bad) = labels.iter().find(|l| **l >= N_SPEECH_CLASSES) {
            return Err(Error::invalid(format!("label {bad} out of range")));
        }
        let cache = self.forward_cached(inputs, Mode::Train)?;
        let loss = cross_entropy(&cache.probs, labels);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("training loss is {loss}")));
        }
        let b = labels.len() as f64;
        let d_logits: Vec<Vec<f64>> = cache
            .probs
            .iter()
            .zip(labels)
            .map(|(p, &y)| {
                p.iter()
                    .enumerate()
                    .map(|(k, pk)| (pk - if k == y { 1.0 } else { 0.0 }) / b)
                    .collect()
            })
            .collect();
        let grads = self.backward(&cache, &d_logits);
        Ok((loss, grads, cache))
    }
}

pub fn cross_entropy(probs: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| -(p[y].max(f64::MIN_POSITIVE)).ln())
        .sum::<f64>()
        / n
}

pub fn cnn_forward<T: AsRef<[f64]>>(
    model: &CnnModel,
    batch: &[T],
    mode: Mode,
) -> Result<Vec<Vec<f64>>> {
    model.forward(batch, mode)
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(model: &CnnModel, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros = Gradients::zeros_like(model).0;
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn apply(&mut self, model: &mut CnnModel, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((param, g), m), v) in model
            .trainable_mut()
            .into_iter()
            .zip(&grads.0)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..param.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
