//! Binary regression trees grown with the variance-reduction (MSE) criterion.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

/// Growth parameters for a single tree.
#[derive(Debug, Clone, Copy)]
pub struct GrowParams {
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub features_per_split: usize,
}

/// Mean via running update: `m += (v - m) / k`. Exact when all values are equal.
pub(crate) fn running_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut mean = 0.0;
    for (k, v) in values.into_iter().enumerate() {
        mean += (v - mean) / (k + 1) as f64;
    }
    mean
}

impl RegressionTree {
    /// Builds a tree from explicit nodes; node 0 is the root.
    pub fn from_nodes(nodes: Vec<Node>, n_features: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::invalid("tree has no nodes"));
        }
        for (i, n) in nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                left,
                right,
                threshold,
            } = n
            {
                if *feature >= n_features
                    || *left >= nodes.len()
                    || *right >= nodes.len()
                    || *left <= i
                    || *right <= i
                    || !threshold.is_finite()
                {
                    return Err(Error::invalid(format!("tree node {i} is malformed")));
                }
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn leaf_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value } => Some(*value),
            Node::Split { .. } => None,
        })
    }

    /// Grows a tree on `rows` (indices into `x`/`y`; repeats allowed).
    pub fn grow<R: Rng>(
        x: &[Vec<f64>],
        y: &[f64],
        rows: Vec<usize>,
        params: &GrowParams,
        rng: &mut R,
    ) -> Self {
        let mut tree = Self { nodes: Vec::new() };
        tree.grow_node(x, y, rows, 0, params, rng);
        tree
    }

    fn grow_node<R: Rng>(
        &mut self,
        x: &[Vec<f64>],
        y: &[f64],
        rows: Vec<usize>,
        depth: usize,
        params: &GrowParams,
        rng: &mut R,
    ) -> usize {
        let id = self.nodes.len();
        let leaf_value = running_mean(rows.iter().map(|&r| y[r]));
        self.nodes.push(Node::Leaf { value: leaf_value });

        let pure = rows.iter().all(|&r| y[r] == y[rows[0]]);
        let depth_reached = params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || rows.len() < 2 * params.min_samples_leaf {
            return id;
        }

        let n_features = x[0].len();
        let k = params.features_per_split.clamp(1, n_features);
        let mut candidates: Vec<usize> = sample(rng, n_features, k).into_vec();
        candidates.sort_unstable();

        let Some(split) = best_split(x, y, &rows, &candidates, params.min_samples_leaf) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| x[r][split.feature] <= split.threshold);
        let left = self.grow_node(x, y, left_rows, depth + 1, params, rng);
        let right = self.grow_node(x, y, right_rows, depth + 1, params, rng);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Split {
    pub feature: usize,
    pub threshold: f64,
}

/// Best variance-reduction split among `features`, scanned in ascending
/// feature order and ascending threshold; only strict improvements replace
/// the incumbent, so ties go to the lowest feature then lowest threshold.
pub(crate) fn best_split(
    x: &[Vec<f64>],
    y: &[f64],
    rows: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<Split> {
    let n = rows.len();
    let total: f64 = rows.iter().map(|&r| y[r]).sum();
    // maximizing sum_l^2/n_l + sum_r^2/n_r is equivalent to minimizing child SSE
    let parent_score = total * total / n as f64;
    let mut best: Option<(f64, Split)> = None;
    let mut order = rows.to_vec();

    for &f in features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left_sum = 0.0;
        for i in 0..n - 1 {
            left_sum += y[order[i]];
            let n_left = i + 1;
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let (lo, hi) = (x[order[i]][f], x[order[i + 1]][f]);
            if lo >= hi {
                continue;
            }
            let right_sum = total - left_sum;
            let score =
                left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64;
            if score <= parent_score + 1e-12 * parent_score.abs().max(1e-12) {
                continue;
            }
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid < hi { mid } else { lo };
                best = Some((
                    score,
                    Split {
                        feature: f,
                        threshold,
                    },
                ));
            }
        }
    }
    best.map(|(_, s)| s)
}
