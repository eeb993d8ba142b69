//! Shapley attributions with the interventional value function
//! `v(S) = mean_z f(x_S, z_rest)` over background rows `z`.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::FeatureTable;
use crate::error::{Error, Result};
use crate::forest::ForestModel;
use crate::seed::rng_from_seed;
use crate::textfeat::FEATURE_NAMES;

/// Largest feature count accepted by [`shapley_exact`].
pub const MAX_EXACT_FEATURES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyAttribution {
    pub values: Vec<f64>,
    /// Mean prediction over the background rows.
    pub base_value: f64,
    pub feature_values: Vec<f64>,
    pub prediction: f64,
}

impl ShapleyAttribution {
    /// `base_value + sum(values) - prediction`; zero up to rounding in exact mode.
    pub fn efficiency_gap(&self) -> f64 {
        self.base_value + self.values.iter().sum::<f64>() - self.prediction
    }
}

fn check_inputs(instance: &[f64], background: &[Vec<f64>]) -> Result<()> {
    if background.is_empty() {
        return Err(Error::invalid("Shapley background is empty"));
    }
    if let Some(b) = background.iter().find(|b| b.len() != instance.len()) {
        return Err(Error::invalid(format!(
            "background row has {} features, instance has {}",
            b.len(),
            instance.len()
        )));
    }
    Ok(())
}

/// Mean prediction with features in `mask` taken from the instance.
fn coalition_value<F>(
    f: &F,
    instance: &[f64],
    background: &[Vec<f64>],
    mask: u32,
    buf: &mut [f64],
) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let mut sum = 0.0;
    for z in background {
        for (j, slot) in buf.iter_mut().enumerate() {
            *slot = if mask >> j & 1 == 1 {
                instance[j]
            } else {
                z[j]
            };
        }
        sum += f(buf);
    }
    sum / background.len() as f64
}

/// Exact values by evaluating every coalition once.
pub fn shapley_exact<F>(
    f: &F,
    instance: &[f64],
    background: &[Vec<f64>],
) -> Result<ShapleyAttribution>
where
    F: Fn(&[f64]) -> f64,
{
    check_inputs(instance, background)?;
    let n = instance.len();
    if n > MAX_EXACT_FEATURES {
        return Err(Error::invalid(format!(
            "exact Shapley values support at most {MAX_EXACT_FEATURES} features, got {n}"
        )));
    }
    let mut buf = vec![0.0; n];
    let v: Vec<f64> = (0..1u32 << n)
        .map(|mask| coalition_value(f, instance, background, mask, &mut buf))
        .collect();
    // weight[s] = s! (n - s - 1)! / n!
    let weight: Vec<f64> = (0..n)
        .map(|s| {
            let mut w = 1.0 / n as f64;
            for k in 1..=s {
                w *= k as f64 / (n - k) as f64;
            }
            w
        })
        .collect();
    let values = (0..n)
        .map(|i| {
            let bit = 1u32 << i;
            (0..1u32 << n)
                .filter(|m| m & bit == 0)
                .map(|m| weight[m.count_ones() as usize] * (v[(m | bit) as usize] - v[m as usize]))
                .sum()
        })
        .collect();
    Ok(ShapleyAttribution {
        values,
        base_value: v[0],
        feature_values: instance.to_vec(),
        prediction: f(instance),
    })
}

/// Monte Carlo estimate over `permutations` random feature orderings
/// (coalition values are still averaged over the full background).
pub fn shapley_sampled<F>(
    f: &F,
    instance: &[f64],
    background: &[Vec<f64>],
    permutations: usize,
    seed: u64,
) -> Result<ShapleyAttribution>
where
    F: Fn(&[f64]) -> f64,
{
    check_inputs(instance, background)?;
    if permutations == 0 {
        return Err(Error::invalid("at least one permutation is required"));
    }
    let n = instance.len();
    if n > 32 {
        return Err(Error::invalid(
            "sampled Shapley values support at most 32 features",
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut values = vec![0.0; n];
    let mut buf = vec![0.0; n];
    let base_value = coalition_value(f, instance, background, 0, &mut buf);
    for _ in 0..permutations {
        order.shuffle(&mut rng);
        let mut mask = 0u32;
        let mut prev = base_value;
        for &i in &order {
            mask |= 1 << i;
            let next = coalition_value(f, instance, background, mask, &mut buf);
            values[i] += next - prev;
            prev = next;
        }
    }
    values.iter_mut().for_each(|v| *v /= permutations as f64);
    Ok(ShapleyAttribution {
        values,
        base_value,
        feature_values: instance.to_vec(),
        prediction: f(instance),
    })
}

/// Evenly spaced rows of `table`, at most `max_rows` of them, as background.
pub fn background_rows(table: &FeatureTable, max_rows: usize) -> Vec<Vec<f64>> {
    let rows = table.features();
    let m = rows.len().min(max_rows.max(1));
    (0..m).map(|k| rows[k * rows.len() / m].to_vec()).collect()
}

/// Exact attributions of the forest for every row of `table`.
pub fn shap_summary(
    table: &FeatureTable,
    model: &ForestModel,
    background: &[Vec<f64>],
) -> Result<Vec<ShapleyAttribution>> {
    if table.is_empty() {
        return Err(Error::invalid("feature table is empty"));
    }
    let f = |x: &[f64]| model.predict_slice(x);
    table
        .features()
        .par_iter()
        .map(|row| shapley_exact(&f, row, background))
        .collect()
}

/// One `row,feature,shapley_value,feature_value` record per row and feature.
pub fn write_shap_summary<W: Write>(attributions: &[ShapleyAttribution], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["row", "feature", "shapley_value", "feature_value"])
        .map_err(|e| Error::csv("shap summary", e))?;
    for (row, a) in attributions.iter().enumerate() {
        for (j, (v, x)) in a.values.iter().zip(&a.feature_values).enumerate() {
            let name = FEATURE_NAMES.get(j).copied().unwrap_or("?");
            w.write_record([
                row.to_string(),
                name.to_string(),
                v.to_string(),
                x.to_string(),
            ])
            .map_err(|e| Error::csv("shap summary", e))?;
        }
    }
    w.flush().map_err(|e| Error::csv("shap summary", e))?;
    Ok(())
}
