//! Random-forest regressor producing the context-agnostic engagement branch.
//!
//! Trees are CART regressors on bootstrap resamples with a random feature
//! subset at each split. Tree `i` is seeded with `seed + i`, so training is
//! reproducible and trees can be grown in parallel.

mod tree;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::FeatureTable;
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;
use crate::textfeat::{TextFeatureVector, FEATURE_NAMES, N_TEXT_FEATURES};

pub(crate) use tree::running_mean;
pub use tree::{GrowParams, Node, RegressionTree};

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub features_per_split: usize,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            min_samples_leaf: 2,
            max_depth: None,
            features_per_split: N_TEXT_FEATURES.div_ceil(3),
            bootstrap: true,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0
            || self.min_samples_leaf == 0
            || self.features_per_split == 0
            || self.max_depth == Some(0)
        {
            return Err(Error::invalid("forest parameters must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format_version: u32,
    pub config: ForestConfig,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub trees: Vec<RegressionTree>,
}

/// Fits a forest on generic rows. Shared by [`train_forest`] and tests on
/// tables with fewer than fourteen columns.
pub fn train_forest_rows(
    x: &[Vec<f64>],
    y: &[f64],
    feature_names: Vec<String>,
    config: &ForestConfig,
    seed: u64,
) -> Result<ForestModel> {
    config.validate()?;
    if x.len() < 2 {
        return Err(Error::invalid(format!(
            "forest training needs at least 2 rows, got {}",
            x.len()
        )));
    }
    if x.len() != y.len() {
        return Err(Error::invalid("feature rows and labels differ in length"));
    }
    let width = feature_names.len();
    if x.iter().any(|r| r.len() != width) {
        return Err(Error::invalid("feature rows have inconsistent width"));
    }
    if y.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("labels must lie in [0,1]"));
    }
    let params = GrowParams {
        min_samples_leaf: config.min_samples_leaf,
        max_depth: config.max_depth,
        features_per_split: config.features_per_split,
    };
    let n = x.len();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(seed.wrapping_add(i as u64));
            let rows: Vec<usize> = if config.bootstrap {
                use rand::Rng;
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            RegressionTree::grow(x, y, rows, &params, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        format_version: FOREST_FORMAT_VERSION,
        config: config.clone(),
        seed,
        feature_names,
        trees,
    })
}

pub fn train_forest(table: &FeatureTable, config: &ForestConfig, seed: u64) -> Result<ForestModel> {
    if table.is_empty() {
        return Err(Error::invalid("feature table is empty"));
    }
    let x: Vec<Vec<f64>> = table.features().iter().map(|r| r.to_vec()).collect();
    let names = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    train_forest_rows(&x, &table.labels(), names, config, seed)
}

impl ForestModel {
    /// Assembles a model from hand-built trees.
    pub fn from_trees(trees: Vec<RegressionTree>, feature_names: Vec<String>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        let model = Self {
            format_version: FOREST_FORMAT_VERSION,
            config: ForestConfig {
                n_trees: trees.len(),
                ..ForestConfig::default()
            },
            seed: 0,
            feature_names,
            trees,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FOREST_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: self.format_version,
                expected: FOREST_FORMAT_VERSION,
            });
        }
        if self.trees.is_empty() {
            return Err(Error::invalid("forest has no trees"));
        }
        for t in &self.trees {
            RegressionTree::from_nodes(t.nodes().to_vec(), self.feature_names.len())?;
            if t.leaf_values().any(|v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::invalid("forest leaf value outside [0,1]"));
            }
        }
        Ok(())
    }

    /// Mean of per-tree predictions, clamped to [0, 1].
    pub fn predict_slice(&self, x: &[f64]) -> f64 {
        running_mean(self.trees.iter().map(|t| t.predict(x))).clamp(0.0, 1.0)
    }

    pub fn predict(&self, features: &TextFeatureVector) -> f64 {
        self.predict_slice(&features.to_array())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("forest model", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text).map_err(|e| Error::json("forest model", e))?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        crate::io::write_bytes_atomic(path, text.as_bytes())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&crate::io::read_to_string(path)?)
    }
}

pub fn predict_forest(model: &ForestModel, features: &TextFeatureVector) -> f64 {
    model.predict(features)
}

/// Mean squared error of the model over the table.
pub fn forest_mse(model: &ForestModel, table: &FeatureTable) -> Result<f64> {
    if table.is_empty() {
        return Err(Error::invalid("cannot compute MSE on an empty table"));
    }
    let sse: f64 = table
        .rows
        .iter()
        .map(|(f, y)| (model.predict(f) - y).powi(2))
        .sum();
    Ok(sse / table.len() as f64)
}
