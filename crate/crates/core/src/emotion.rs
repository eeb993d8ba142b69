//! Probability vectors over emotion classes, shared by the text and speech heads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Text-emotion classes in their fixed order.
pub const TEXT_EMOTIONS: [&str; 5] = ["joy", "sadness", "fear", "anger", "neutral"];

/// Speech-emotion classes in their fixed (alphabetical) order.
pub const SPEECH_EMOTIONS: [&str; 8] = [
    "angry",
    "calm",
    "disgust",
    "fearful",
    "happy",
    "neutral",
    "sad",
    "surprised",
];

/// Speech classes counted as positive when scoring delivery.
pub const POSITIVE_SPEECH_EMOTIONS: [&str; 4] = ["calm", "happy", "neutral", "surprised"];

pub(crate) const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

/// A probability vector over K emotion classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmotionDistribution(Vec<f64>);

impl EmotionDistribution {
    /// Validates that `probs` is nonnegative, finite and sums to one.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("emotion distribution has no classes"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(
                "emotion probabilities must be finite and nonnegative",
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(Error::invalid(format!(
                "emotion probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self(probs))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.0
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sums_and_negatives() {
        assert!(EmotionDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(EmotionDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(EmotionDistribution::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax(&[1.0, 2.0, 3.0]);
        let b = softmax(&[101.0, 102.0, 103.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_entropy_is_log_k() {
        let d = EmotionDistribution::uniform(5);
        assert!((d.entropy() - 5f64.ln()).abs() < 1e-12);
    }
}
