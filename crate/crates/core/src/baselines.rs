//! Distance and divergence baselines: multivariate Gaussian fits of
//! feature-space point clouds, closed-form KLD, Mahalanobis/Euclidean
//! distances, fold-based intra-ensemble divergence, and the rank-based
//! rescale used for agreement analysis.
//!
//! All solves go through Cholesky factors; no covariance is ever inverted
//! explicitly.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// N x k feature-space point cloud with named coordinates.
#[derive(Debug, Clone)]
pub struct PointCloud {
    pub points: DMatrix<f64>,
    pub names: Vec<String>,
}

impl PointCloud {
    pub fn new(points: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if points.ncols() != names.len() {
            return Err(Error::SpecMismatch(format!(
                "cloud has {} coordinates but {} names",
                points.ncols(),
                names.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("point cloud entries must be finite".into()));
        }
        Ok(Self { points, names })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// A sub-cloud of the given row indices.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut pts = DMatrix::zeros(rows.len(), self.dim());
        for (dst, &src) in rows.iter().enumerate() {
            pts.set_row(dst, &self.points.row(src));
        }
        Self {
            points: pts,
            names: self.names.clone(),
        }
    }
}

/// Doubling regularization schedule for near-singular sample covariances.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpsilonPolicy {
    /// Initial ridge as a fraction of `trace(cov)/k`.
    pub initial_rel: f64,
    pub max_doublings: u32,
}

impl Default for EpsilonPolicy {
    fn default() -> Self {
        Self {
            initial_rel: 1e-10,
            max_doublings: 60,
        }
    }
}

/// Multivariate Gaussian fit with the regularization actually used.
#[derive(Debug, Clone)]
pub struct GaussianFit {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Ridge added to the diagonal to make the covariance factorizable.
    pub epsilon: f64,
}

impl GaussianFit {
    fn cholesky(&self) -> Result<Cholesky<f64, nalgebra::Dyn>> {
        Cholesky::new(self.cov.clone()).ok_or_else(|| {
            Error::Numerical("covariance not positive definite after regularization".into())
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Fits mean and sample covariance (denominator N-1), adding the smallest
/// ridge from the doubling schedule that makes Cholesky succeed.
pub fn fit_gaussian(cloud: &PointCloud, policy: EpsilonPolicy) -> Result<GaussianFit> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 points to fit a Gaussian, got {n}"
        )));
    }
    let k = cloud.dim();
    let mean = cloud.points.row_mean().transpose();
    let mut centered = cloud.points.clone();
    for i in 0..n {
        for j in 0..k {
            centered[(i, j)] -= mean[j];
        }
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let trace: f64 = cov.diagonal().iter().sum();
    let base = (policy.initial_rel * trace / k as f64).max(f64::MIN_POSITIVE);
    if Cholesky::new(cov.clone()).is_some() {
        return Ok(GaussianFit {
            mean,
            cov,
            epsilon: 0.0,
        });
    }
    let mut eps = base;
    for _ in 0..policy.max_doublings {
        let ridged = &cov + DMatrix::identity(k, k) * eps;
        if Cholesky::new(ridged.clone()).is_some() {
            return Ok(GaussianFit {
                mean,
                cov: ridged,
                epsilon: eps,
            });
        }
        eps *= 2.0;
    }
    Err(Error::Numerical(format!(
        "covariance not factorizable even at ridge {eps:.3e}"
    )))
}

fn log_det_from_cholesky(chol: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Closed-form Gaussian KLD `D(P || Q)` via Cholesky solves and
/// log-determinants.
pub fn kld_gaussian(p: &GaussianFit, q: &GaussianFit) -> Result<f64> {
    let k = p.dim();
    if q.dim() != k {
        return Err(Error::Dimension(format!(
            "fits have different dimensions {k} vs {}",
            q.dim()
        )));
    }
    let chol_q = q.cholesky()?;
    let chol_p = p.cholesky()?;
    // tr(Sigma_Q^{-1} Sigma_P)
    let solved = chol_q.solve(&p.cov);
    let trace: f64 = solved.diagonal().iter().sum();
    let diff = &q.mean - &p.mean;
    let maha = diff.dot(&chol_q.solve(&DMatrix::from_column_slice(k, 1, diff.as_slice())).column(0).into_owned());
    let log_det = log_det_from_cholesky(&chol_q) - log_det_from_cholesky(&chol_p);
    Ok(0.5 * (trace + maha - k as f64 + log_det).max(0.0))
}

/// Mahalanobis distance of a point from a Gaussian fit.
pub fn mahalanobis(x: &DVector<f64>, g: &GaussianFit) -> Result<f64> {
    if x.len() != g.dim() {
        return Err(Error::Dimension(format!(
            "point has dimension {} but fit has {}",
            x.len(),
            g.dim()
        )));
    }
    let chol = g.cholesky()?;
    let diff = x - &g.mean;
    let solved = chol.solve(&DMatrix::from_column_slice(g.dim(), 1, diff.as_slice()));
    Ok(diff.dot(&solved.column(0).into_owned()).max(0.0).sqrt())
}

/// KLD between the Gaussian fits of explicit disjoint index pairs.
fn kld_over_pairs(
    cloud: &PointCloud,
    pairs: &[(Vec<usize>, Vec<usize>)],
    policy: EpsilonPolicy,
) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|(a, b)| {
            let fa = fit_gaussian(&cloud.select(a), policy)?;
            let fb = fit_gaussian(&cloud.select(b), policy)?;
            kld_gaussian(&fa, &fb)
        })
        .collect()
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

/// Splits the cloud into `n_folds` disjoint random block pairs and reports
/// the median KLD between each pair's Gaussian fits plus the interquartile
/// range as a percentage of the median.
pub fn intra_ensemble_kld(
    cloud: &PointCloud,
    n_folds: usize,
    seed: u64,
    policy: EpsilonPolicy,
) -> Result<(f64, f64)> {
    if n_folds == 0 {
        return Err(Error::InvalidInput("need at least one fold".into()));
    }
    let n = cloud.len();
    let block = n / (2 * n_folds);
    if block < 2 {
        return Err(Error::InvalidInput(format!(
            "insufficient points: {n} < 4*n_folds = {} (and the comfortable bound is \
             2*n_folds*(k+2) = {})",
            4 * n_folds,
            2 * n_folds * (cloud.dim() + 2)
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let pairs: Vec<(Vec<usize>, Vec<usize>)> = (0..n_folds)
        .map(|f| {
            let a = order[2 * f * block..(2 * f + 1) * block].to_vec();
            let b = order[(2 * f + 1) * block..(2 * f + 2) * block].to_vec();
            (a, b)
        })
        .collect();
    let mut klds = kld_over_pairs(cloud, &pairs, policy)?;
    klds.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let median = percentile(&klds, 0.5);
    let iqr = percentile(&klds, 0.75) - percentile(&klds, 0.25);
    let iqr_percent = if median > 0.0 { 100.0 * iqr / median } else { 0.0 };
    Ok((median, iqr_percent))
}

/// Rank-maps distances onto the distribution of a reference similarity
/// sample: the largest distance receives the smallest reference quantile.
/// Ties share their average rank, so equal distances map equally.
pub fn quantile_match_rescale(distances: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    if distances.is_empty() || reference.is_empty() {
        return Err(Error::InvalidInput("empty input to quantile rescale".into()));
    }
    let n = distances.len();
    let mut sorted_ref: Vec<f64> = reference.to_vec();
    sorted_ref.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| distances[b].partial_cmp(&distances[a]).unwrap());
    // average ranks over tie groups (descending distance order)
    let mut midrank = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && distances[order[j + 1]] == distances[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &idx in &order[i..=j] {
            midrank[idx] = avg;
        }
        i = j + 1;
    }
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    Ok(midrank
        .iter()
        .map(|&r| {
            let q = if n > 1 { r / denom } else { 0.5 };
            percentile(&sorted_ref, q)
        })
        .collect())
}

/// Agreement summary between a similarity list and a rescaled distance list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Share of pairs with |s - d| beyond the error band.
    pub fraction_outside_band: f64,
    /// Share of pairs outside the band whose two measures sit on opposite
    /// sides of 0.5.
    pub fraction_opposite_conclusion: f64,
}

pub fn agreement_analysis(
    similarities: &[f64],
    rescaled_distances: &[f64],
    delta: f64,
) -> Result<AgreementReport> {
    if similarities.len() != rescaled_distances.len() {
        return Err(Error::SpecMismatch(format!(
            "length mismatch: {} similarities vs {} distances",
            similarities.len(),
            rescaled_distances.len()
        )));
    }
    if similarities.is_empty() {
        return Err(Error::InvalidInput("empty agreement input".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta {delta} must be in (0,1)")));
    }
    let n = similarities.len() as f64;
    let mut outside = 0usize;
    let mut opposite = 0usize;
    for (&s, &d) in similarities.iter().zip(rescaled_distances) {
        if (s - d).abs() > delta {
            outside += 1;
            if (s - 0.5) * (d - 0.5) < 0.0 {
                opposite += 1;
            }
        }
    }
    Ok(AgreementReport {
        fraction_outside_band: outside as f64 / n,
        fraction_opposite_conclusion: opposite as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("f{i}")).collect()
    }

    fn normal_cloud(n: usize, mean: &[f64], sds: &[f64], seed: u64) -> PointCloud {
        let k = mean.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = DMatrix::from_fn(n, k, |_, j| {
            let z: f64 = StandardNormal.sample(&mut rng);
            mean[j] + sds[j] * z
        });
        PointCloud::new(pts, names(k)).unwrap()
    }

    fn fit_1d(mu: f64, var: f64) -> GaussianFit {
        GaussianFit {
            mean: DVector::from_element(1, mu),
            cov: DMatrix::from_element(1, 1, var),
            epsilon: 0.0,
        }
    }

    #[test]
    fn two_point_hand_fit() {
        let cloud = PointCloud::new(DMatrix::from_column_slice(2, 1, &[0.0, 2.0]), names(1)).unwrap();
        let g = fit_gaussian(&cloud, EpsilonPolicy::default()).unwrap();
        assert_abs_diff_eq!(g.mean[0], 1.0);
        assert_abs_diff_eq!(g.cov[(0, 0)], 2.0);
        assert_eq!(g.epsilon, 0.0);
    }

    #[test]
    fn monte_carlo_fit_recovers_truth() {
        let n = 100_000;
        let mean = [1.0, -2.0, 0.5, 3.0];
        let sds = [1.0, 0.5, 2.0, 1.5];
        let cloud = normal_cloud(n, &mean, &sds, 7);
        let g = fit_gaussian(&cloud, EpsilonPolicy::default()).unwrap();
        for j in 0..4 {
            let se_mean = sds[j] / (n as f64).sqrt();
            assert!((g.mean[j] - mean[j]).abs() < 3.0 * se_mean);
            let var = sds[j] * sds[j];
            let se_var = var * (2.0 / n as f64).sqrt();
            assert!((g.cov[(j, j)] - var).abs() < 3.0 * se_var);
        }
    }

    #[test]
    fn rank_deficient_cloud_engages_ridge() {
        // all points on a line in 3-D
        let n = 50;
        let pts = DMatrix::from_fn(n, 3, |i, j| (i as f64) * (j as f64 + 1.0));
        let cloud = PointCloud::new(pts, names(3)).unwrap();
        let g = fit_gaussian(&cloud, EpsilonPolicy::default()).unwrap();
        assert!(g.epsilon > 0.0, "ridge must engage on a singular covariance");
        assert!(kld_gaussian(&g, &g).is_ok());
    }

    #[test]
    fn too_few_points_rejected() {
        let cloud = PointCloud::new(DMatrix::zeros(1, 2), names(2)).unwrap();
        assert!(fit_gaussian(&cloud, EpsilonPolicy::default()).is_err());
    }

    #[test]
    fn kld_identity_is_zero() {
        let cloud = normal_cloud(500, &[0.0, 1.0, 2.0], &[1.0, 2.0, 0.5], 3);
        let g = fit_gaussian(&cloud, EpsilonPolicy::default()).unwrap();
        assert!(kld_gaussian(&g, &g).unwrap() < 1e-9);
    }

    #[test]
    fn kld_closed_form_unit_shift() {
        let p = fit_1d(0.0, 1.0);
        let q = fit_1d(1.0, 1.0);
        assert_abs_diff_eq!(kld_gaussian(&p, &q).unwrap(), 0.5, epsilon = 1e-12);
    }

    /// Composite-Simpson quadrature of the 1-D KLD integrand.
    fn kld_quadrature_1d(p: &GaussianFit, q: &GaussianFit) -> f64 {
        let (mp, sp) = (p.mean[0], p.cov[(0, 0)].sqrt());
        let (mq, sq) = (q.mean[0], q.cov[(0, 0)].sqrt());
        let lo = (mp - 14.0 * sp).min(mq - 14.0 * sq);
        let hi = (mp + 14.0 * sp).max(mq + 14.0 * sq);
        let n = 40_000usize; // even
        let h = (hi - lo) / n as f64;
        let pdf = |x: f64, m: f64, s: f64| {
            (-((x - m) * (x - m)) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
        };
        let f = |x: f64| {
            let px = pdf(x, mp, sp);
            if px <= 1e-300 {
                0.0
            } else {
                px * (px.ln() - pdf(x, mq, sq).max(1e-300).ln())
            }
        };
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            let x = lo + i as f64 * h;
            acc += f(x) * if i % 2 == 0 { 2.0 } else { 4.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn kld_matches_quadrature_on_random_1d_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..50 {
            let p = fit_1d(rng.gen_range(-3.0..3.0), rng.gen_range(0.2..4.0));
            let q = fit_1d(rng.gen_range(-3.0..3.0), rng.gen_range(0.2..4.0));
            let closed = kld_gaussian(&p, &q).unwrap();
            let quad = kld_quadrature_1d(&p, &q);
            assert!(
                (closed - quad).abs() < 1e-6,
                "closed {closed} vs quadrature {quad}"
            );
        }
    }

    #[test]
    fn kld_asymmetric_on_fixed_pair() {
        let p = fit_1d(0.0, 1.0);
        let q = fit_1d(1.5, 3.0);
        let pq = kld_gaussian(&p, &q).unwrap();
        let qp = kld_gaussian(&q, &p).unwrap();
        assert!((pq - qp).abs() > 1e-3, "expected asymmetry, got {pq} vs {qp}");
        assert!(pq >= 0.0 && qp >= 0.0);
    }

    #[test]
    fn mahalanobis_basics() {
        let cloud = normal_cloud(2000, &[1.0, 2.0], &[1.0, 3.0], 11);
        let g = fit_gaussian(&cloud, EpsilonPolicy::default()).unwrap();
        assert_abs_diff_eq!(mahalanobis(&g.mean.clone(), &g).unwrap(), 0.0, epsilon = 1e-12);

        // identity covariance reduces to Euclidean distance
        let gi = GaussianFit {
            mean: DVector::from_column_slice(&[1.0, -1.0]),
            cov: DMatrix::identity(2, 2),
            epsilon: 0.0,
        };
        let x = DVector::from_column_slice(&[4.0, 3.0]);
        let euclid = ((4.0f64 - 1.0).powi(2) + (3.0f64 + 1.0).powi(2)).sqrt();
        assert_abs_diff_eq!(mahalanobis(&x, &gi).unwrap(), euclid, epsilon = 1e-12);
    }

    #[test]
    fn mahalanobis_diagonal_matches_standardized_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let k = 5;
            let mean = DVector::from_fn(k, |_, _| rng.gen_range(-2.0..2.0));
            let vars: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..4.0)).collect();
            let g = GaussianFit {
                mean: mean.clone(),
                cov: DMatrix::from_diagonal(&DVector::from_column_slice(&vars)),
                epsilon: 0.0,
            };
            let x = DVector::from_fn(k, |_, _| rng.gen_range(-5.0..5.0));
            let oracle: f64 = (0..k)
                .map(|j| (x[j] - mean[j]).powi(2) / vars[j])
                .sum::<f64>()
                .sqrt();
            assert_abs_diff_eq!(mahalanobis(&x, &g).unwrap(), oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn intra_kld_zero_on_duplicated_halves() {
        // force a split pairing identical halves
        let half = normal_cloud(40, &[0.0, 0.0], &[1.0, 1.0], 5);
        let mut pts = DMatrix::zeros(80, 2);
        for i in 0..40 {
            pts.set_row(i, &half.points.row(i));
            pts.set_row(40 + i, &half.points.row(i));
        }
        let cloud = PointCloud::new(pts, names(2)).unwrap();
        let pairs = vec![((0..40).collect::<Vec<_>>(), (40..80).collect::<Vec<_>>())];
        let klds = kld_over_pairs(&cloud, &pairs, EpsilonPolicy::default()).unwrap();
        assert!(klds[0] < 1e-9, "identical halves must have zero KLD, got {}", klds[0]);
    }

    #[test]
    fn intra_kld_small_against_shifted_source() {
        let k = 8;
        let n = 10_000;
        let cloud = normal_cloud(n, &vec![0.0; k], &vec![1.0; k], 23);
        let (median_intra, _) =
            intra_ensemble_kld(&cloud, 2, 7, EpsilonPolicy::default()).unwrap();
        // fit whole cloud vs a 3-sigma shifted source
        let shifted = normal_cloud(n, &vec![3.0; k], &vec![1.0; k], 29);
        let f1 = fit_gaussian(&cloud, EpsilonPolicy::default()).unwrap();
        let f2 = fit_gaussian(&shifted, EpsilonPolicy::default()).unwrap();
        let between = kld_gaussian(&f1, &f2).unwrap();
        assert!(
            median_intra / between < 0.1,
            "intra {median_intra} should be well below inter {between}"
        );
    }

    #[test]
    fn intra_kld_deterministic_and_bounded() {
        let cloud = normal_cloud(200, &[0.0, 1.0], &[1.0, 1.0], 31);
        let a = intra_ensemble_kld(&cloud, 4, 9, EpsilonPolicy::default()).unwrap();
        let b = intra_ensemble_kld(&cloud, 4, 9, EpsilonPolicy::default()).unwrap();
        assert_eq!(a, b);
        assert!(intra_ensemble_kld(&cloud, 60, 9, EpsilonPolicy::default()).is_err());
    }

    #[test]
    fn rescale_rank_identity() {
        let reference = vec![0.1, 0.3, 0.5, 0.7, 0.9];
        let distances: Vec<f64> = reference.iter().map(|s| 1.0 - s).collect();
        let out = quantile_match_rescale(&distances, &reference).unwrap();
        let mut sorted_out = out.clone();
        sorted_out.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(sorted_out, reference);
        // and the mapping is order-reversing
        assert_eq!(out, reference);
    }

    #[test]
    fn rescale_all_equal_gives_median() {
        let reference = vec![0.0, 0.2, 0.4, 0.8, 1.0];
        let out = quantile_match_rescale(&[7.0; 6], &reference).unwrap();
        for v in out {
            assert_abs_diff_eq!(v, 0.4, epsilon = 1e-12);
        }
    }

    #[test]
    fn rescale_spearman_minus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let distances: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..10.0)).collect();
        let reference: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..1.0)).collect();
        let out = quantile_match_rescale(&distances, &reference).unwrap();
        // ranks of output must be exactly reversed ranks of distances
        let rank = |v: &[f64]| -> Vec<usize> {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
            let mut r = vec![0usize; v.len()];
            for (pos, &i) in idx.iter().enumerate() {
                r[i] = pos;
            }
            r
        };
        let rd = rank(&distances);
        let ro = rank(&out);
        let n = distances.len();
        for i in 0..n {
            assert_eq!(ro[i], n - 1 - rd[i]);
        }
    }

    #[test]
    fn agreement_identical_lists() {
        let s = vec![0.2, 0.5, 0.9];
        let rep = agreement_analysis(&s, &s, 0.2).unwrap();
        assert_eq!(rep.fraction_outside_band, 0.0);
        assert_eq!(rep.fraction_opposite_conclusion, 0.0);
    }

    #[test]
    fn agreement_counts_opposite_conclusions() {
        let s = vec![0.9];
        let d = vec![0.1];
        let rep = agreement_analysis(&s, &d, 0.2).unwrap();
        assert_eq!(rep.fraction_outside_band, 1.0);
        assert_eq!(rep.fraction_opposite_conclusion, 1.0);
    }

    #[test]
    fn agreement_rejects_bad_inputs() {
        assert!(agreement_analysis(&[0.1], &[0.1, 0.2], 0.2).is_err());
        assert!(agreement_analysis(&[0.1], &[0.1], 0.0).is_err());
    }
}
