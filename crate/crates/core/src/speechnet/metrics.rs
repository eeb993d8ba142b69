//! Confusion matrices and macro-averaged precision, recall and F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns are predicted classes.
pub fn confusion_matrix(
    truth: &[usize],
    predicted: &[usize],
    n_classes: usize,
) -> Result<Vec<Vec<u64>>> {
    if truth.len() != predicted.len() {
        return Err(Error::invalid("truth and predictions differ in length"));
    }
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::invalid(format!(
                "class index out of range ({t}, {p})"
            )));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Unweighted mean over classes; 0 for an empty slice.
pub fn macro_average(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class metrics from a square confusion matrix (rows = truth). Any
/// ratio with a zero denominator is reported as 0.
pub fn prf_macro(confusion: &[Vec<u64>]) -> Result<PrfReport> {
    let k = confusion.len();
    if confusion.iter().any(|r| r.len() != k) {
        return Err(Error::invalid("confusion matrix must be square"));
    }
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = confusion[c][c];
            let support: u64 = confusion[c].iter().sum();
            let predicted: u64 = confusion.iter().map(|r| r[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let col =
        |f: fn(&ClassMetrics) -> f64| macro_average(&per_class.iter().map(f).collect::<Vec<_>>());
    Ok(PrfReport {
        macro_precision: col(|m| m.precision),
        macro_recall: col(|m| m.recall),
        macro_f1: col(|m| m.f1),
        per_class,
    })
}
