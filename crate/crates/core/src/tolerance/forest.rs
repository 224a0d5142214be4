//! From-scratch random forest (bagged CART, Gini criterion, unrestricted
//! depth) used only to rank feature importance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::phantom::derive_seed;

#[derive(Debug, Clone, Copy)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 64, seed: 0 }
    }
}

fn gini(c0: usize, c1: usize) -> f64 {
    let n = (c0 + c1) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = c0 as f64 / n;
    let p1 = c1 as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

struct SplitResult {
    feature: usize,
    decrease: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

/// Best threshold split over a random feature subset; None if no split
/// reduces impurity.
fn best_split(
    data: &[Vec<f64>],
    labels: &[u8],
    node: &[usize],
    feature_pool: &[usize],
    rng: &mut ChaCha8Rng,
) -> Option<SplitResult> {
    let n = node.len();
    let m_try = (feature_pool.len() as f64).sqrt().ceil() as usize;
    let mut pool: Vec<usize> = feature_pool.to_vec();
    // partial Fisher-Yates for the feature subsample
    for i in 0..m_try.min(pool.len()) {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    let candidates = &pool[..m_try.min(pool.len())];

    let total_pos: usize = node.iter().map(|&i| labels[i] as usize).sum();
    let parent_gini = gini(n - total_pos, total_pos);
    if parent_gini == 0.0 {
        return None;
    }
    let mut best: Option<(f64, usize, f64)> = None; // (decrease, feature, threshold)
    for &f in candidates {
        let mut vals: Vec<(f64, u8)> = node.iter().map(|&i| (data[i][f], labels[i])).collect();
        vals.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut left_pos = 0usize;
        let mut left_n = 0usize;
        for i in 0..n - 1 {
            left_pos += vals[i].1 as usize;
            left_n += 1;
            if vals[i].0 == vals[i + 1].0 {
                continue;
            }
            let right_n = n - left_n;
            let right_pos = total_pos - left_pos;
            let w_gini = left_n as f64 / n as f64 * gini(left_n - left_pos, left_pos)
                + right_n as f64 / n as f64 * gini(right_n - right_pos, right_pos);
            let decrease = parent_gini - w_gini;
            if decrease > best.map_or(0.0, |b| b.0) + 1e-15 {
                let threshold = 0.5 * (vals[i].0 + vals[i + 1].0);
                best = Some((decrease, f, threshold));
            }
        }
    }
    best.map(|(decrease, feature, threshold)| {
        let mut left = Vec::new();
        let mut right = Vec::new();
        for &i in node {
            if data[i][feature] <= threshold {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        SplitResult {
            feature,
            decrease,
            left,
            right,
        }
    })
}

fn grow_tree_importance(
    data: &[Vec<f64>],
    labels: &[u8],
    sample: Vec<usize>,
    n_total: usize,
    rng: &mut ChaCha8Rng,
    importance: &mut [f64],
) {
    let feature_pool: Vec<usize> = (0..data[0].len()).collect();
    let mut stack = vec![sample];
    while let Some(node) = stack.pop() {
        if node.len() < 2 {
            continue;
        }
        if let Some(split) = best_split(data, labels, &node, &feature_pool, rng) {
            importance[split.feature] += node.len() as f64 / n_total as f64 * split.decrease;
            stack.push(split.left);
            stack.push(split.right);
        }
    }
}

/// Mean Gini impurity decrease per feature over a bagged forest of fully
/// grown trees, normalized to sum 1. Deterministic per seed.
pub fn random_forest_importance(
    features: &[Vec<f64>],
    labels: &[u8],
    cfg: ForestConfig,
) -> Result<Vec<f64>> {
    let n = features.len();
    if n < 20 {
        return Err(Error::InvalidInput(format!(
            "random forest needs at least 20 samples, got {n}"
        )));
    }
    if labels.len() != n {
        return Err(Error::SpecMismatch(format!(
            "{n} samples but {} labels",
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::InvalidInput("labels must be binary".into()));
    }
    let pos: usize = labels.iter().map(|&l| l as usize).sum();
    if pos == 0 || pos == n {
        return Err(Error::InvalidInput(
            "both classes must be present to train the forest".into(),
        ));
    }
    let m = features[0].len();
    if features.iter().any(|row| row.len() != m) {
        return Err(Error::SpecMismatch("ragged feature table".into()));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("feature values must be finite".into()));
    }
    if cfg.n_trees == 0 {
        return Err(Error::InvalidInput("need at least one tree".into()));
    }

    let mut total = vec![0.0f64; m];
    for t in 0..cfg.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, t as u64));
        // bootstrap sample
        let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let mut imp = vec![0.0f64; m];
        grow_tree_importance(features, labels, sample, n, &mut rng, &mut imp);
        for (acc, v) in total.iter_mut().zip(&imp) {
            *acc += v;
        }
    }
    for v in &mut total {
        *v /= cfg.n_trees as f64;
    }
    let sum: f64 = total.iter().sum();
    if sum > 0.0 {
        for v in &mut total {
            *v /= sum;
        }
    }
    Ok(total)
}
