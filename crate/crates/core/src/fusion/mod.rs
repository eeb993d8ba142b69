//! Combines the four branch scores into one engagement score, fits the
//! combination weights under a Huber loss, and measures each branch's share
//! by leaving it out.

mod joint;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::emotion::{
    EmotionDistribution, POSITIVE_SPEECH_EMOTIONS, SPEECH_EMOTIONS, TEXT_EMOTIONS,
};
use crate::error::{Error, Result};
use crate::objcount::ObjectActivity;
use crate::speechnet::EmotionTimeline;

pub use joint::{finetune_speech, x3_from_probs, x3_gradient, JointOutcome, JointSample};

pub const FUSION_FORMAT_VERSION: u32 = 1;
/// Starting point of coefficient training: (alpha, beta, gamma, delta).
pub const INITIAL_COEFFICIENTS: [f64; 4] = [0.5, 0.1, 0.2, 0.2];
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;
pub const BRANCH_NAMES: [&str; 4] = ["x1", "x2", "x3", "x4"];

/// Ablation scores of the original 50-lecture study, shown beside a
/// lecture's own ablation for context.
pub const REFERENCE_ABLATION: AblationScores = AblationScores {
    full: 0.85,
    drop_x1: 0.63,
    drop_x2: 0.72,
    drop_x3: 0.76,
    drop_x4: 0.72,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchScores {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub x4: f64,
}

impl BranchScores {
    pub fn new(x1: f64, x2: f64, x3: f64, x4: f64) -> Result<Self> {
        let b = Self { x1, x2, x3, x4 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in BRANCH_NAMES.iter().zip(self.to_array()) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "branch {name} = {v} is outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.x2, self.x3, self.x4]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            x1: a[0],
            x2: a[1],
            x3: a[2],
            x4: a[3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionCoefficients {
    pub format_version: u32,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub theta: f64,
    pub constrained: bool,
}

impl Default for FusionCoefficients {
    fn default() -> Self {
        Self::from_array(INITIAL_COEFFICIENTS, 1.0, true)
    }
}

impl FusionCoefficients {
    pub fn from_array(c: [f64; 4], theta: f64, constrained: bool) -> Self {
        Self {
            format_version: FUSION_FORMAT_VERSION,
            alpha: c[0],
            beta: c[1],
            gamma: c[2],
            delta: c[3],
            theta,
            constrained,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.alpha, self.beta, self.gamma, self.delta]
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FUSION_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: self.format_version,
                expected: FUSION_FORMAT_VERSION,
            });
        }
        let c = self.to_array();
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("fusion coefficients must be finite".into()));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::invalid("huber theta must be positive"));
        }
        if self.constrained {
            let sum: f64 = c.iter().sum();
            if c.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(Error::invalid(format!(
                    "constrained coefficients must be nonnegative and sum to 1, got {c:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("fusion coefficients", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self =
            serde_json::from_str(text).map_err(|e| Error::json("fusion coefficients", e))?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        crate::io::write_bytes_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&crate::io::read_to_string(path)?)
    }
}

/// Entropy of the text distribution divided by `ln 5`.
pub fn text_variability(dist: &EmotionDistribution) -> f64 {
    (dist.entropy() / (TEXT_EMOTIONS.len() as f64).ln()).clamp(0.0, 1.0)
}

pub fn positive_mask() -> [bool; 8] {
    let mut m = [false; 8];
    for (i, c) in SPEECH_EMOTIONS.iter().enumerate() {
        m[i] = POSITIVE_SPEECH_EMOTIONS.contains(c);
    }
    m
}

/// Mean probability mass on the positive speech classes.
pub fn positive_share(windows: &[&[f64]]) -> f64 {
    if windows.is_empty() {
        return 0.0;
    }
    let mask = positive_mask();
    let total: f64 = windows
        .iter()
        .map(|p| {
            p.iter()
                .zip(mask)
                .filter(|(_, m)| *m)
                .map(|(v, _)| v)
                .sum::<f64>()
        })
        .sum();
    total / windows.len() as f64
}

/// Mean total-variation distance between consecutive windows; 0 with fewer
/// than two windows.
pub fn temporal_variability(windows: &[&[f64]]) -> f64 {
    if windows.len() < 2 {
        return 0.0;
    }
    let total: f64 = windows
        .windows(2)
        .map(|w| {
            0.5 * w[0]
                .iter()
                .zip(w[1])
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
        })
        .sum();
    total / (windows.len() - 1) as f64
}

pub fn speech_score(timeline: &EmotionTimeline) -> f64 {
    let windows: Vec<&[f64]> = timeline
        .windows
        .iter()
        .map(|w| w.distribution.probs())
        .collect();
    x3_from_probs(&windows)
}

/// Reduces each branch's raw output to a score in [0, 1].
pub fn scalarize_branches(
    x1: f64,
    text: &EmotionDistribution,
    timeline: &EmotionTimeline,
    activity: &ObjectActivity,
) -> BranchScores {
    BranchScores {
        x1: x1.clamp(0.0, 1.0),
        x2: text_variability(text),
        x3: speech_score(timeline).clamp(0.0, 1.0),
        x4: activity.x4.clamp(0.0, 1.0),
    }
}

pub fn fuse_arrays(c: &[f64; 4], x: &[f64; 4]) -> f64 {
    c[0] * x[0] + c[1] * x[1] + c[2] * x[2] + c[3] * x[3]
}

pub fn fuse(coeffs: &FusionCoefficients, branches: &BranchScores) -> f64 {
    fuse_arrays(&coeffs.to_array(), &branches.to_array())
}

/// Huber loss of prediction `y` against target `y_hat`.
pub fn huber_loss(y: f64, y_hat: f64, theta: f64) -> f64 {
    let d = (y - y_hat).abs();
    if d <= theta {
        0.5 * d * d
    } else {
        theta * (d - 0.5 * theta)
    }
}

/// Derivative of [`huber_loss`] with respect to `y`.
pub fn huber_grad(y: f64, y_hat: f64, theta: f64) -> f64 {
    let d = y - y_hat;
    if d.abs() <= theta {
        d
    } else {
        theta * d.signum()
    }
}

/// Euclidean projection onto `{c >= 0, sum c = 1}` by the sort-and-threshold
/// method.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionSample {
    pub branches: BranchScores,
    pub y_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub theta: f64,
    pub constrained: bool,
    /// Adam step size for the speech network during joint fine-tuning.
    pub finetune_learning_rate: f64,
    pub finetune_iters: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            max_iters: 1000,
            tol: 1e-6,
            theta: 1.0,
            constrained: true,
            finetune_learning_rate: 1e-5,
            finetune_iters: 20,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("fusion learning_rate must be positive"));
        }
        if !(self.tol >= 0.0) || !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::invalid("fusion tol must be >= 0 and theta > 0"));
        }
        if !(self.finetune_learning_rate >= 0.0 && self.finetune_learning_rate.is_finite()) {
            return Err(Error::invalid(
                "finetune_learning_rate must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

pub fn mean_loss(c: &[f64; 4], samples: &[FusionSample], theta: f64) -> f64 {
    samples
        .iter()
        .map(|s| huber_loss(fuse_arrays(c, &s.branches.to_array()), s.y_hat, theta))
        .sum::<f64>()
        / samples.len() as f64
}

/// Gradient of [`mean_loss`] with respect to the four coefficients.
pub fn loss_gradient(c: &[f64; 4], samples: &[FusionSample], theta: f64) -> [f64; 4] {
    let mut g = [0.0; 4];
    for s in samples {
        let x = s.branches.to_array();
        let dy = huber_grad(fuse_arrays(c, &x), s.y_hat, theta);
        for i in 0..4 {
            g[i] += dy * x[i];
        }
    }
    let n = samples.len() as f64;
    g.map(|v| v / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionStep {
    pub iter: usize,
    pub loss: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionOutcome {
    pub coefficients: FusionCoefficients,
    /// Row 0 is the starting point; row `i` follows step `i`.
    pub history: Vec<FusionStep>,
    pub converged: bool,
}

impl FusionOutcome {
    pub fn final_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |s| s.loss)
    }

    pub fn write_history_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for s in &self.history {
            w.serialize(s)
                .map_err(|e| Error::csv("fusion history", e))?;
        }
        w.flush().map_err(|e| Error::csv("fusion history", e))?;
        Ok(())
    }
}

fn validate_samples(samples: &[FusionSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::invalid("fusion training needs at least one sample"));
    }
    for (row, s) in samples.iter().enumerate() {
        s.branches.validate().map_err(|e| Error::BadRow {
            row,
            message: e.to_string(),
        })?;
        if !(0.0..=1.0).contains(&s.y_hat) {
            return Err(Error::BadRow {
                row,
                message: format!("y_hat {} is outside [0, 1]", s.y_hat),
            });
        }
    }
    Ok(())
}

fn step_record(iter: usize, c: &[f64; 4], loss: f64) -> FusionStep {
    FusionStep {
        iter,
        loss,
        alpha: c[0],
        beta: c[1],
        gamma: c[2],
        delta: c[3],
    }
}

/// One projected gradient step; returns the new coefficients.
pub(crate) fn coefficient_step(c: &[f64; 4], grad: &[f64; 4], config: &FusionConfig) -> [f64; 4] {
    if grad.iter().all(|g| *g == 0.0) {
        return *c;
    }
    let moved: Vec<f64> = c
        .iter()
        .zip(grad)
        .map(|(v, g)| v - config.learning_rate * g)
        .collect();
    let next = if config.constrained {
        project_to_simplex(&moved)
    } else {
        moved
    };
    [next[0], next[1], next[2], next[3]]
}

/// Full-batch gradient descent on the mean Huber loss from
/// [`INITIAL_COEFFICIENTS`], projecting onto the simplex after each step when
/// constrained. Stops when no coefficient moves by more than `tol` or after
/// `max_iters` steps.
pub fn train_coefficients(
    samples: &[FusionSample],
    config: &FusionConfig,
) -> Result<FusionOutcome> {
    train_coefficients_from(INITIAL_COEFFICIENTS, samples, config)
}

pub fn train_coefficients_from(
    start: [f64; 4],
    samples: &[FusionSample],
    config: &FusionConfig,
) -> Result<FusionOutcome> {
    config.validate()?;
    validate_samples(samples)?;
    let theta = config.theta;
    let mut c = start;
    let mut history = vec![step_record(0, &c, mean_loss(&c, samples, theta))];
    let mut converged = false;
    for iter in 1..=config.max_iters {
        let grad = loss_gradient(&c, samples, theta);
        let next = coefficient_step(&c, &grad, config);
        let change = c
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        c = next;
        let loss = mean_loss(&c, samples, theta);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "fusion loss became {loss} at step {iter}"
            )));
        }
        history.push(step_record(iter, &c, loss));
        if change <= config.tol {
            converged = true;
            break;
        }
    }
    let coefficients = FusionCoefficients::from_array(c, theta, config.constrained);
    Ok(FusionOutcome {
        coefficients,
        history,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationScores {
    pub full: f64,
    pub drop_x1: f64,
    pub drop_x2: f64,
    pub drop_x3: f64,
    pub drop_x4: f64,
}

/// Fused score with each coefficient in turn set to zero; the others are
/// kept as they are.
pub fn ablation_leave_one_out(
    coeffs: &FusionCoefficients,
    branches: &BranchScores,
) -> AblationScores {
    let c = coeffs.to_array();
    let x = branches.to_array();
    let drop = |i: usize| {
        let mut d = c;
        d[i] = 0.0;
        fuse_arrays(&d, &x)
    };
    AblationScores {
        full: fuse_arrays(&c, &x),
        drop_x1: drop(0),
        drop_x2: drop(1),
        drop_x3: drop(2),
        drop_x4: drop(3),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleRow {
    x1: f64,
    x2: f64,
    x3: f64,
    x4: f64,
    y_hat: f64,
}

/// Reads `x1,x2,x3,x4,y_hat` rows.
pub fn read_fusion_samples<R: std::io::Read>(
    reader: R,
    context: &str,
) -> Result<Vec<FusionSample>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(context, e))?.clone();
    for col in ["x1", "x2", "x3", "x4", "y_hat"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingColumn(col.into()));
        }
    }
    rdr.deserialize::<SampleRow>()
        .enumerate()
        .map(|(row, r)| {
            let r = r.map_err(|e| Error::BadRow {
                row,
                message: e.to_string(),
            })?;
            Ok(FusionSample {
                branches: BranchScores::from_array([r.x1, r.x2, r.x3, r.x4]),
                y_hat: r.y_hat,
            })
        })
        .collect()
}

pub fn load_fusion_samples(path: &Path) -> Result<Vec<FusionSample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_fusion_samples(file, &path.display().to_string())
}

pub fn write_fusion_samples<W: Write>(samples: &[FusionSample], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in samples {
        let b = s.branches;
        w.serialize(SampleRow {
            x1: b.x1,
            x2: b.x2,
            x3: b.x3,
            x4: b.x4,
            y_hat: s.y_hat,
        })
        .map_err(|e| Error::csv("fusion samples", e))?;
    }
    w.flush().map_err(|e| Error::csv("fusion samples", e))?;
    Ok(())
}

#[cfg(test)]
mod tests;
