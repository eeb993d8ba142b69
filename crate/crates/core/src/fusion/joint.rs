//! Joint fitting of the fusion coefficients and the speech network: the
//! fusion loss gradient reaches the network through the X3 reduction of its
//! window distributions.

use serde::{Deserialize, Serialize};

use super::{
    coefficient_step, fuse_arrays, huber_grad, huber_loss, positive_mask, positive_share,
    temporal_variability, FusionCoefficients, FusionConfig, FusionStep,
};
use crate::error::{Error, Result};
use crate::speechnet::{Adam, CnnModel, Gradients, Mode};

/// X3 from per-window speech distributions: half positive share, half
/// temporal variability.
pub fn x3_from_probs(windows: &[&[f64]]) -> f64 {
    0.5 * positive_share(windows) + 0.5 * temporal_variability(windows)
}

/// Partial derivatives of [`x3_from_probs`] with respect to every window
/// probability. Ties in the total-variation term take the zero subgradient.
pub fn x3_gradient(windows: &[&[f64]]) -> Vec<Vec<f64>> {
    let w = windows.len();
    let mask = positive_mask();
    let mut grad: Vec<Vec<f64>> = windows
        .iter()
        .map(|p| {
            (0..p.len())
                .map(|k| {
                    if mask.get(k).copied().unwrap_or(false) {
                        0.5 / w as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    if w >= 2 {
        let scale = 0.5 * 0.5 / (w - 1) as f64;
        for t in 0..w - 1 {
            for k in 0..windows[t].len() {
                let s = sign(windows[t][k] - windows[t + 1][k]);
                grad[t][k] += scale * s;
                grad[t + 1][k] -= scale * s;
            }
        }
    }
    grad
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// A lecture for joint fitting: fixed X1, X2, X4, the speech feature vector
/// of each timeline window, and the target score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSample {
    pub x1: f64,
    pub x2: f64,
    pub x4: f64,
    pub windows: Vec<Vec<f64>>,
    pub y_hat: f64,
}

#[derive(Debug, Clone)]
pub struct JointOutcome {
    pub coefficients: FusionCoefficients,
    pub model: CnnModel,
    pub history: Vec<FusionStep>,
}

fn joint_pass(
    model: &CnnModel,
    c: &[f64; 4],
    samples: &[JointSample],
    theta: f64,
    want_grads: bool,
) -> Result<(f64, [f64; 4], Option<Gradients>)> {
    let n = samples.len() as f64;
    let mut loss = 0.0;
    let mut g_c = [0.0; 4];
    let mut g_net = want_grads.then(|| Gradients::zeros_like(model));
    for s in samples {
        let cache = model.forward_cached(&s.windows, Mode::Eval)?;
        let probs: Vec<&[f64]> = cache.probs.iter().map(Vec::as_slice).collect();
        let x = [s.x1, s.x2, x3_from_probs(&probs), s.x4];
        let y = fuse_arrays(c, &x);
        loss += huber_loss(y, s.y_hat, theta) / n;
        let dy = huber_grad(y, s.y_hat, theta) / n;
        for i in 0..4 {
            g_c[i] += dy * x[i];
        }
        if let Some(g) = g_net.as_mut() {
            let d_x3 = dy * c[2];
            if d_x3 != 0.0 {
                let d_probs: Vec<Vec<f64>> = x3_gradient(&probs)
                    .into_iter()
                    .map(|row| row.into_iter().map(|v| v * d_x3).collect())
                    .collect();
                g.add_assign(&model.backward_from_probs(&cache, &d_probs));
            }
        }
    }
    Ok((loss, g_c, g_net))
}

/// Alternates one projected coefficient step with one Adam step on the
/// speech network (eval-mode batch norm) for `finetune_iters` rounds.
pub fn finetune_speech(
    model: &CnnModel,
    start: &FusionCoefficients,
    samples: &[JointSample],
    config: &FusionConfig,
) -> Result<JointOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid(
            "joint fine-tuning needs at least one sample",
        ));
    }
    if samples.iter().any(|s| s.windows.is_empty()) {
        return Err(Error::invalid(
            "every joint sample needs at least one speech window",
        ));
    }
    let theta = config.theta;
    let mut model = model.clone();
    let mut optimizer = Adam::new(&model, config.finetune_learning_rate, 0.9, 0.999, 1e-8);
    let mut c = start.to_array();
    let (loss0, _, _) = joint_pass(&model, &c, samples, theta, false)?;
    let mut history = vec![super::step_record(0, &c, loss0)];
    for iter in 1..=config.finetune_iters {
        let (_, g_c, g_net) = joint_pass(&model, &c, samples, theta, true)?;
        c = coefficient_step(&c, &g_c, config);
        optimizer.apply(&mut model, &g_net.expect("gradients requested"));
        let (loss, _, _) = joint_pass(&model, &c, samples, theta, false)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "joint loss became {loss} at step {iter}"
            )));
        }
        history.push(super::step_record(iter, &c, loss));
    }
    Ok(JointOutcome {
        coefficients: FusionCoefficients::from_array(c, theta, config.constrained),
        model,
        history,
    })
}
