//! Tolerance-interval derivation: Kolmogorov-Smirnov null bands, percent
//! tolerances, KDE-intersection intervals, and importance-proportional
//! weights from a random forest.

mod forest;

pub use forest::{random_forest_importance, ForestConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Two-sample Kolmogorov-Smirnov statistic: the supremum over thresholds of
/// the ECDF difference.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("KS statistic needs nonempty samples".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (sa.len(), sb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = sa[i].min(sb[j]);
        while i < n && sa[i] == x {
            i += 1;
        }
        while j < m && sb[j] == x {
            j += 1;
        }
        let diff = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        d = d.max(diff);
    }
    Ok(d)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n as f64 - 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] * (1.0 - t) + sorted[hi] * t
}

/// A derived acceptance interval plus a degeneracy flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedInterval {
    pub lower: f64,
    pub upper: f64,
    pub flagged: bool,
}

/// Estimates the null distribution of the KS statistic from random archetype
/// sample pairs and returns its empirical (q_low, q_high) quantiles as the
/// acceptance interval for a subject-vs-archetype KS statistic.
pub fn ks_tolerance(
    archetypes: &[Vec<f64>],
    q_low: f64,
    q_high: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<DerivedInterval> {
    if archetypes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "KS tolerance needs at least 2 archetype samples, got {}",
            archetypes.len()
        )));
    }
    if !(0.0 <= q_low && q_low < q_high && q_high <= 1.0) {
        return Err(Error::InvalidInput("quantiles must satisfy 0 <= low < high <= 1".into()));
    }
    if n_pairs == 0 {
        return Err(Error::InvalidInput("need at least one archetype pair".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let i = rng.gen_range(0..archetypes.len());
        let mut j = rng.gen_range(0..archetypes.len() - 1);
        if j >= i {
            j += 1;
        }
        stats.push(ks_statistic(&archetypes[i], &archetypes[j])?);
    }
    stats.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
    let lower = percentile(&stats, q_low);
    let upper = percentile(&stats, q_high);
    Ok(DerivedInterval {
        lower,
        upper,
        flagged: !(lower < upper),
    })
}

/// Symmetric percent tolerance around an archetype value. A zero archetype
/// value falls back to the caller-supplied epsilon half-width (by
/// convention, 0.2 x the ensemble feature standard deviation) and is
/// flagged.
pub fn percent_tolerance(archetype_value: f64, pct: f64, zero_epsilon: f64) -> Result<DerivedInterval> {
    if !(pct > 0.0) {
        return Err(Error::InvalidInput(format!("pct must be positive, got {pct}")));
    }
    if archetype_value == 0.0 {
        let eps = if zero_epsilon > 0.0 { zero_epsilon } else { f64::EPSILON };
        return Ok(DerivedInterval {
            lower: -eps,
            upper: eps,
            flagged: true,
        });
    }
    let half = archetype_value.abs() * pct / 100.0;
    Ok(DerivedInterval {
        lower: archetype_value - half,
        upper: archetype_value + half,
        flagged: false,
    })
}

/// Gaussian-kernel density estimate of `sample` on `grid` with bandwidth `h`.
fn kde_on_grid(sample: &[f64], grid: &[f64], h: f64) -> Vec<f64> {
    let norm = 1.0 / (sample.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|&x| {
            sample
                .iter()
                .map(|&s| (-((x - s) / h).powi(2) / 2.0).exp())
                .sum::<f64>()
                * norm
        })
        .collect()
}

fn silverman_bandwidth(pooled: &mut Vec<f64>) -> f64 {
    pooled.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = pooled.len() as f64;
    let mean = pooled.iter().sum::<f64>() / n;
    let sd = (pooled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = percentile(pooled, 0.75) - percentile(pooled, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    (0.9 * spread * n.powf(-0.2)).max(f64::MIN_POSITIVE)
}

const KDE_GRID_POINTS: usize = 512;

/// Finds the maximal contiguous interval, containing the archetype mode,
/// where the archetype KDE strictly exceeds the subject KDE. Crossings are
/// located by linear interpolation between grid points; bandwidth follows
/// Silverman's rule on the pooled sample; the 512-point grid spans the
/// pooled range padded by three bandwidths.
///
/// The flag marks multimodal ambiguity: other disjoint dominance regions
/// exist beyond the returned mode-anchored one.
pub fn kde_intersection_tolerance(
    archetype: &[f64],
    subject: &[f64],
    ) -> Result<DerivedInterval> {
    if archetype.len() < 20 || subject.len() < 20 {
        return Err(Error::InvalidInput(format!(
            "KDE tolerance needs at least 20 points per sample, got {} and {}",
            archetype.len(),
            subject.len()
        )));
    }
    let mut pooled: Vec<f64> = archetype.iter().chain(subject.iter()).copied().collect();
    let h = silverman_bandwidth(&mut pooled);
    let lo = pooled.first().unwrap() - 3.0 * h;
    let hi = pooled.last().unwrap() + 3.0 * h;
    let grid: Vec<f64> = (0..KDE_GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (KDE_GRID_POINTS - 1) as f64)
        .collect();
    let fa = kde_on_grid(archetype, &grid, h);
    let fs = kde_on_grid(subject, &grid, h);

    let mode_idx = fa
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let dominant: Vec<bool> = fa.iter().zip(&fs).map(|(a, s)| a > s).collect();
    if !dominant[mode_idx] {
        return Err(Error::DegenerateComparison(
            "archetype density does not exceed subject density at the archetype mode".into(),
        ));
    }
    let mut left = mode_idx;
    while left > 0 && dominant[left - 1] {
        left -= 1;
    }
    let mut right = mode_idx;
    while right + 1 < KDE_GRID_POINTS && dominant[right + 1] {
        right += 1;
    }
    // refine interval ends by linear interpolation of the density difference
    let interp = |i: usize, j: usize| -> f64 {
        let di = fa[i] - fs[i];
        let dj = fa[j] - fs[j];
        if (di - dj).abs() < f64::MIN_POSITIVE {
            grid[i]
        } else {
            grid[i] + (grid[j] - grid[i]) * di / (di - dj)
        }
    };
    let lower = if left == 0 { grid[0] } else { interp(left - 1, left) };
    let upper = if right + 1 == KDE_GRID_POINTS {
        grid[KDE_GRID_POINTS - 1]
    } else {
        interp(right, right + 1)
    };
    // ambiguity: dominance regions disconnected from the returned one
    let ambiguous = dominant
        .iter()
        .enumerate()
        .any(|(i, &d)| d && (i + 1 < left || i > right + 1));
    Ok(DerivedInterval {
        lower,
        upper,
        flagged: ambiguous,
    })
}

/// Retains the `top_k` most important features and scales weights so the
/// least important retained feature has weight exactly 1.
pub fn importance_weights(
    importances: &[f64],
    names: &[String],
    top_k: usize,
) -> Result<(Vec<f64>, Vec<String>)> {
    if importances.len() != names.len() {
        return Err(Error::SpecMismatch(format!(
            "{} importances vs {} names",
            importances.len(),
            names.len()
        )));
    }
    if top_k == 0 || top_k > importances.len() {
        return Err(Error::InvalidInput(format!(
            "top_k {} out of range [1, {}]",
            top_k,
            importances.len()
        )));
    }
    if importances.iter().any(|v| *v < 0.0) || importances.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidInput(
            "importances must be nonnegative and not all zero".into(),
        ));
    }
    let mut order: Vec<usize> = (0..importances.len()).collect();
    order.sort_by(|&a, &b| {
        importances[b]
            .partial_cmp(&importances[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let retained = &order[..top_k];
    let min_imp = retained
        .iter()
        .map(|&i| importances[i])
        .fold(f64::INFINITY, f64::min);
    if min_imp <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "least important retained feature has zero importance; reduce top_k below {top_k}"
        )));
    }
    let weights: Vec<f64> = retained.iter().map(|&i| importances[i] / min_imp).collect();
    let selected: Vec<String> = retained.iter().map(|&i| names[i].clone()).collect();
    Ok((weights, selected))
}
