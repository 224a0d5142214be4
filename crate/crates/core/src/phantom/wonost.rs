//! Worley-noise soft tissue (WonoST) phantom.
//!
//! The red channel is first-nearest-neighbor Worley noise over a base seed
//! set, histogram-transformed onto Beta(2, 4.4). The blue channel is
//! distinct F1 noise over a superset of the base seeds. The green channel
//! thresholds the red channel to mark the original seed locations. Three
//! systematic perturbations shift the red median, delete green seed
//! markers, and remove small-cell centers from the blue texture.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use super::derive_seed;
use crate::error::{Error, Result};
use crate::image::{quantize_to_u8, RgbImage};
use crate::imgproc::{connected_components, gaussian_blur, histogram, otsu_threshold, Mask};

/// Fixed shape parameter of the intensity model; the perturbation solves for
/// the first parameter only.
pub const BETA_SHAPE_B: f64 = 4.4;
/// Baseline first shape parameter.
pub const BETA_SHAPE_A: f64 = 2.0;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WonostConfig {
    pub rows: usize,
    pub cols: usize,
    /// Exact number of base seeds.
    pub seed_count: usize,
    /// The blue channel uses `seed_count * extra_seed_factor` seeds in total
    /// (the base seeds plus extras).
    pub extra_seed_factor: f64,
    /// Threshold on the Beta-scaled red intensity marking seed neighborhoods.
    pub green_threshold: f64,
    pub rng_seed: u64,
}

impl Default for WonostConfig {
    fn default() -> Self {
        Self {
            rows: 256,
            cols: 256,
            seed_count: 64,
            extra_seed_factor: 8.0,
            green_threshold: 0.08,
            rng_seed: 0,
        }
    }
}

impl WonostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows < 8 || self.cols < 8 {
            return Err(Error::InvalidInput("dims too small".into()));
        }
        if self.seed_count < 1 {
            return Err(Error::InvalidInput("seed_count must be >= 1".into()));
        }
        if !(self.extra_seed_factor > 1.0) {
            return Err(Error::InvalidInput("extra_seed_factor must exceed 1".into()));
        }
        if !(self.green_threshold > 0.0 && self.green_threshold < 1.0) {
            return Err(Error::InvalidInput("green_threshold must be in (0,1)".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.rng_seed = seed;
        c
    }

    /// Nominal radius (pixels) of a green seed marker: the F1 distance whose
    /// ideal-Poisson quantile matches the green threshold on the Beta scale.
    pub fn nominal_marker_radius(&self) -> f64 {
        let beta = Beta::new(BETA_SHAPE_A, BETA_SHAPE_B).expect("valid beta");
        let q = beta.cdf(self.green_threshold);
        let lambda = self.seed_count as f64 / (self.rows * self.cols) as f64;
        (-(1.0 - q).ln() / (lambda * std::f64::consts::PI)).sqrt()
    }
}

/// Continuous seed coordinates, all inside the frame and pairwise distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSet {
    pub points: Vec<(f64, f64)>,
}

impl SeedSet {
    pub fn new(points: Vec<(f64, f64)>, rows: usize, cols: usize) -> Result<Self> {
        for &(r, c) in &points {
            if !(r >= 0.0 && r < rows as f64 && c >= 0.0 && c < cols as f64) {
                return Err(Error::InvalidInput(format!(
                    "seed ({r}, {c}) outside the {rows}x{cols} frame"
                )));
            }
        }
        let mut sorted: Vec<(u64, u64)> = points
            .iter()
            .map(|&(r, c)| (r.to_bits(), c.to_bits()))
            .collect();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("duplicate seed points".into()));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Samples exactly `count` uniform points with a minimum pairwise
/// separation (dart throwing). Separation keeps the green seed markers
/// disjoint so each base seed stays individually countable.
fn sample_separated(
    rows: usize,
    cols: usize,
    count: usize,
    min_dist: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(f64, f64)>> {
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(count);
    let d2 = min_dist * min_dist;
    let mut attempts = 0u64;
    let max_attempts = 200_000u64.max(count as u64 * 10_000);
    while pts.len() < count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Numerical(format!(
                "could not place {count} seeds at separation {min_dist:.2} px"
            )));
        }
        let p = (
            rng.gen_range(0.0..rows as f64),
            rng.gen_range(0.0..cols as f64),
        );
        if pts
            .iter()
            .all(|&(r, c)| (r - p.0).powi(2) + (c - p.1).powi(2) >= d2)
        {
            pts.push(p);
        }
    }
    Ok(pts)
}

/// First-nearest-neighbor Worley noise: distance from each pixel center to
/// the nearest seed, accelerated by a uniform bucket grid.
pub fn worley_f1(rows: usize, cols: usize, seeds: &SeedSet) -> Result<Array2<f64>> {
    if seeds.is_empty() {
        return Err(Error::InvalidInput("Worley noise needs at least one seed".into()));
    }
    let n = seeds.len();
    let cell = ((rows * cols) as f64 / n as f64).sqrt().max(1.0);
    let gy = ((rows as f64 / cell).ceil() as usize).max(1);
    let gx = ((cols as f64 / cell).ceil() as usize).max(1);
    let mut buckets: Vec<Vec<(f64, f64)>> = vec![Vec::new(); gy * gx];
    let bucket_of = |r: f64, c: f64| -> (usize, usize) {
        let by = ((r / cell) as usize).min(gy - 1);
        let bx = ((c / cell) as usize).min(gx - 1);
        (by, bx)
    };
    for &(r, c) in &seeds.points {
        let (by, bx) = bucket_of(r, c);
        buckets[by * gx + bx].push((r, c));
    }
    let mut out = Array2::zeros((rows, cols));
    for pr in 0..rows {
        for pc in 0..cols {
            let (py, px) = (pr as f64 + 0.5, pc as f64 + 0.5);
            let (by, bx) = bucket_of(py.min(rows as f64 - 1e-9), px.min(cols as f64 - 1e-9));
            let mut best = f64::INFINITY;
            let mut ring = 0isize;
            loop {
                // ring of buckets at Chebyshev radius `ring`
                let mut any_in_range = false;
                for dy in -ring..=ring {
                    for dx in -ring..=ring {
                        if dy.abs() != ring && dx.abs() != ring {
                            continue;
                        }
                        let ny = by as isize + dy;
                        let nx = bx as isize + dx;
                        if ny < 0 || nx < 0 || ny >= gy as isize || nx >= gx as isize {
                            continue;
                        }
                        any_in_range = true;
                        for &(sr, sc) in &buckets[ny as usize * gx + nx as usize] {
                            let d2 = (sr - py).powi(2) + (sc - px).powi(2);
                            if d2 < best {
                                best = d2;
                            }
                        }
                    }
                }
                // Distance from the pixel to the nearest edge of the next
                // unexplored ring: at least (ring)*cell - cell (conservative).
                let ring_guard = (ring as f64) * cell - cell;
                if best.is_finite() && ring_guard > 0.0 && ring_guard * ring_guard >= best {
                    break;
                }
                if !any_in_range && ring as usize > gy.max(gx) {
                    break;
                }
                ring += 1;
            }
            out[[pr, pc]] = best.sqrt();
        }
    }
    Ok(out)
}

/// Monotone lookup table for a Beta(a, b) quantile function.
///
/// Inversion error is bounded by the x-grid spacing (1/8192), well below an
/// 8-bit gray level.
pub struct BetaQuantileTable {
    xs: Vec<f64>,
    cdfs: Vec<f64>,
}

impl BetaQuantileTable {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let beta = Beta::new(a, b)
            .map_err(|e| Error::Numerical(format!("beta({a}, {b}): {e}")))?;
        let n = 8192;
        let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let cdfs: Vec<f64> = xs.iter().map(|&x| beta.cdf(x)).collect();
        Ok(Self { xs, cdfs })
    }

    /// Inverse CDF by table bisection with linear interpolation.
    pub fn quantile(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        let mut lo = 0usize;
        let mut hi = self.cdfs.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cdfs[mid] <= q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (q0, q1) = (self.cdfs[lo], self.cdfs[hi]);
        if q1 <= q0 {
            return self.xs[lo];
        }
        let t = (q - q0) / (q1 - q0);
        self.xs[lo] + t * (self.xs[hi] - self.xs[lo])
    }
}

/// Rank-transforms a float field onto the Beta(a, b) distribution, returning
/// per-pixel values in [0, 1]. Mid-rank quantiles keep the map monotone.
fn rank_transform_to_beta(field: &Array2<f64>, table: &BetaQuantileTable) -> Array2<f64> {
    let n = field.len();
    let mut order: Vec<usize> = (0..n).collect();
    let flat: Vec<f64> = field.iter().copied().collect();
    order.sort_unstable_by(|&a, &b| flat[a].partial_cmp(&flat[b]).unwrap());
    let mut out = vec![0.0f64; n];
    for (rank, &idx) in order.iter().enumerate() {
        out[idx] = table.quantile((rank as f64 + 0.5) / n as f64);
    }
    Array2::from_shape_vec(field.dim(), out).expect("shape preserved")
}

/// One generated phantom with its ground-truth seed sets.
#[derive(Debug, Clone)]
pub struct WonostRealization {
    pub rgb: RgbImage,
    pub base_seeds: SeedSet,
    pub blue_seeds: SeedSet,
}

/// Generates one WonoST realization.
///
/// Base seeds are a conditional Poisson draw of exactly `seed_count` points
/// with a minimum separation tied to the green marker radius; blue seeds are
/// the base set plus uniform extras.
pub fn generate_wonost(cfg: &WonostConfig) -> Result<WonostRealization> {
    cfg.validate()?;
    let (rows, cols) = (cfg.rows, cfg.cols);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, 0));
    let min_dist = 2.0 * cfg.nominal_marker_radius() * 1.15 + 3.0;
    let base_pts = sample_separated(rows, cols, cfg.seed_count, min_dist, &mut rng)?;
    let base_seeds = SeedSet::new(base_pts.clone(), rows, cols)?;

    let total_blue = ((cfg.seed_count as f64 * cfg.extra_seed_factor).round() as usize)
        .max(cfg.seed_count + 1);
    let mut blue_pts = base_pts;
    let mut rng_extra = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, 1));
    while blue_pts.len() < total_blue {
        let p = (
            rng_extra.gen_range(0.0..rows as f64),
            rng_extra.gen_range(0.0..cols as f64),
        );
        if !blue_pts.contains(&p) {
            blue_pts.push(p);
        }
    }
    let blue_seeds = SeedSet::new(blue_pts, rows, cols)?;

    let f1_red = worley_f1(rows, cols, &base_seeds)?;
    let table = BetaQuantileTable::new(BETA_SHAPE_A, BETA_SHAPE_B)?;
    let red_beta = rank_transform_to_beta(&f1_red, &table);
    let red = red_beta.mapv(|v| (255.0 * v).round().clamp(0.0, 255.0) as u8);

    let green = red_beta.mapv(|v| if v < cfg.green_threshold { 255u8 } else { 0 });

    let f1_blue = worley_f1(rows, cols, &blue_seeds)?;
    let blue = quantize_to_u8(&f1_blue);

    Ok(WonostRealization {
        rgb: RgbImage::new(red, green, blue)?,
        base_seeds,
        blue_seeds,
    })
}

/// Outcome bookkeeping for a perturbation call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbReport {
    pub removed: usize,
    pub total: usize,
    pub flagged: bool,
}

/// Solves for the Beta first shape parameter whose median is
/// `(1 + pct/100) * median(Beta(2, 4.4))`, holding the second parameter
/// fixed. Bisection on the median, tolerance 1e-6.
pub fn solve_alpha_for_median_increase(pct: f64) -> Result<f64> {
    if pct == 0.0 {
        return Ok(BETA_SHAPE_A);
    }
    let base = Beta::new(BETA_SHAPE_A, BETA_SHAPE_B)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let target = (1.0 + pct / 100.0) * base.inverse_cdf(0.5);
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Numerical(format!(
            "target median {target:.4} unreachable for any alpha"
        )));
    }
    let median_of = |a: f64| -> Result<f64> {
        Beta::new(a, BETA_SHAPE_B)
            .map(|d| d.inverse_cdf(0.5))
            .map_err(|e| Error::Numerical(e.to_string()))
    };
    let mut lo = 1e-6f64;
    let mut hi = BETA_SHAPE_A;
    if target > median_of(hi)? {
        while median_of(hi)? < target {
            hi *= 2.0;
            if hi > 1e9 {
                return Err(Error::Numerical(format!(
                    "no solvable alpha for pct {pct}"
                )));
            }
        }
        lo = hi / 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let m = median_of(mid)?;
        if (m - target).abs() < 1e-6 {
            return Ok(mid);
        }
        if m < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Histogram-transforms the red channel to a Beta distribution whose median
/// exceeds the baseline Beta(2, 4.4) median by `pct` percent. Other channels
/// are untouched.
pub fn perturb_red(img: &RgbImage, pct: f64) -> Result<RgbImage> {
    if pct < 0.0 {
        return Err(Error::InvalidInput("pct must be nonnegative".into()));
    }
    let alpha = solve_alpha_for_median_increase(pct)?;
    let table = BetaQuantileTable::new(alpha, BETA_SHAPE_B)?;
    let hist = histogram(&img.red);
    let n: u64 = hist.iter().sum();
    let mut cum = 0u64;
    let mut map = [0u8; 256];
    for v in 0..256 {
        if hist[v] > 0 {
            let q = (cum as f64 + 0.5 * hist[v] as f64) / n as f64;
            map[v] = (255.0 * table.quantile(q)).round().clamp(0.0, 255.0) as u8;
        }
        cum += hist[v];
    }
    let mut out = img.clone();
    out.red.mapv_inplace(|v| map[v as usize]);
    Ok(out)
}

/// Removes a percentage of the green seed markers, selected uniformly at
/// random. Selection is a seeded shuffle prefix, so removal sets are nested
/// across increasing percentages at a fixed seed.
pub fn perturb_green(img: &RgbImage, pct: f64, seed: u64) -> Result<(RgbImage, PerturbReport)> {
    if pct < 0.0 {
        return Err(Error::InvalidInput("pct must be nonnegative".into()));
    }
    let support: Mask = img.green.mapv(|v| (v > 0) as u8);
    let (labels, count) = connected_components(&support);
    if count == 0 {
        return Err(Error::InvalidInput(
            "green channel has no connected components".into(),
        ));
    }
    let flagged = pct >= 100.0;
    let k = if flagged {
        count as usize
    } else {
        ((pct / 100.0 * count as f64).round() as usize).min(count as usize)
    };
    let mut order: Vec<u32> = (1..=count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let removed: std::collections::HashSet<u32> = order[..k].iter().copied().collect();
    let mut out = img.clone();
    for (idx, &lab) in labels.indexed_iter() {
        if lab != 0 && removed.contains(&lab) {
            out.green[idx] = 0;
        }
    }
    Ok((
        out,
        PerturbReport {
            removed: k,
            total: count as usize,
            flagged,
        },
    ))
}

/// Small-cell centers of the blue texture: blur, binarize at the Otsu
/// threshold, and take centroids of the dark basins.
pub fn detect_blue_cell_centers(img: &RgbImage) -> Vec<(f64, f64)> {
    let blurred = gaussian_blur(&img.blue.mapv(|v| v as f64), 2.0);
    let q = quantize_to_u8(&blurred);
    let hist = histogram(&q);
    let Some(t) = otsu_threshold(&hist) else {
        return Vec::new();
    };
    let dark: Mask = q.mapv(|v| (v <= t) as u8);
    let (labels, count) = connected_components(&dark);
    let mut sums = vec![(0.0f64, 0.0f64, 0u64); count as usize + 1];
    for ((r, c), &lab) in labels.indexed_iter() {
        if lab > 0 {
            let e = &mut sums[lab as usize];
            e.0 += r as f64;
            e.1 += c as f64;
            e.2 += 1;
        }
    }
    sums.iter()
        .skip(1)
        .map(|&(sr, sc, n)| (sr / n as f64, sc / n as f64))
        .collect()
}

/// Removes a percentage of the blue small-cell centers with per-center
/// probability proportional to the area of the enclosing large-scale cell
/// (normalized so the expected removal count is `pct`% of centers), then
/// recomputes the first-nearest-neighbor field from the survivors.
///
/// With nothing removed the image is returned byte-for-byte unchanged.
pub fn perturb_blue(img: &RgbImage, pct: f64, seed: u64) -> Result<(RgbImage, PerturbReport)> {
    if pct < 0.0 {
        return Err(Error::InvalidInput("pct must be nonnegative".into()));
    }
    let centers = detect_blue_cell_centers(img);
    if centers.is_empty() {
        return Err(Error::InvalidInput(
            "no recoverable small-cell centers in the blue channel".into(),
        ));
    }
    // Large-scale cell areas via the green seed markers: each pixel belongs
    // to the Voronoi region of its nearest marker centroid.
    let support: Mask = img.green.mapv(|v| (v > 0) as u8);
    let (labels, count) = connected_components(&support);
    let weights: Vec<f64> = if count >= 2 {
        let mut sums = vec![(0.0f64, 0.0f64, 0u64); count as usize + 1];
        for ((r, c), &lab) in labels.indexed_iter() {
            if lab > 0 {
                let e = &mut sums[lab as usize];
                e.0 += r as f64;
                e.1 += c as f64;
                e.2 += 1;
            }
        }
        let marks: Vec<(f64, f64)> = sums
            .iter()
            .skip(1)
            .map(|&(sr, sc, n)| (sr / n as f64, sc / n as f64))
            .collect();
        let (rows, cols) = img.green.dim();
        let mut areas = vec![0u64; marks.len()];
        for r in 0..rows {
            for c in 0..cols {
                let (pr, pc) = (r as f64 + 0.5, c as f64 + 0.5);
                let mut best = (f64::INFINITY, 0usize);
                for (i, &(mr, mc)) in marks.iter().enumerate() {
                    let d2 = (mr - pr).powi(2) + (mc - pc).powi(2);
                    if d2 < best.0 {
                        best = (d2, i);
                    }
                }
                areas[best.1] += 1;
            }
        }
        centers
            .iter()
            .map(|&(cr, cc)| {
                let mut best = (f64::INFINITY, 0usize);
                for (i, &(mr, mc)) in marks.iter().enumerate() {
                    let d2 = (mr - cr).powi(2) + (mc - cc).powi(2);
                    if d2 < best.0 {
                        best = (d2, i);
                    }
                }
                areas[best.1] as f64
            })
            .collect()
    } else {
        vec![1.0; centers.len()]
    };
    let mean_w = weights.iter().sum::<f64>() / weights.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut survivors = Vec::with_capacity(centers.len());
    let mut removed = 0usize;
    for (i, &c) in centers.iter().enumerate() {
        let p = (pct / 100.0 * weights[i] / mean_w).clamp(0.0, 1.0);
        if rng.gen_range(0.0..1.0) < p {
            removed += 1;
        } else {
            survivors.push(c);
        }
    }
    if removed == 0 {
        return Ok((
            img.clone(),
            PerturbReport {
                removed: 0,
                total: centers.len(),
                flagged: false,
            },
        ));
    }
    if survivors.is_empty() {
        return Err(Error::Numerical(
            "perturbation removed every blue cell center".into(),
        ));
    }
    let (rows, cols) = img.blue.dim();
    let seeds = SeedSet::new(survivors, rows, cols)?;
    let f1 = worley_f1(rows, cols, &seeds)?;
    let mut out = img.clone();
    out.blue = quantize_to_u8(&f1);
    Ok((
        out,
        PerturbReport {
            removed,
            total: centers.len(),
            flagged: false,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_cfg(seed: u64) -> WonostConfig {
        WonostConfig {
            rows: 128,
            cols: 128,
            seed_count: 24,
            rng_seed: seed,
            ..WonostConfig::default()
        }
    }

    #[test]
    fn worley_single_seed_is_distance_map() {
        let seeds = SeedSet::new(vec![(7.5, 11.5)], 32, 32).unwrap();
        let f = worley_f1(32, 32, &seeds).unwrap();
        for r in 0..32 {
            for c in 0..32 {
                let d = ((r as f64 + 0.5 - 7.5).powi(2) + (c as f64 + 0.5 - 11.5).powi(2)).sqrt();
                assert_abs_diff_eq!(f[[r, c]], d, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn worley_zero_at_seed_pixels() {
        let cfg = small_cfg(3);
        let real = generate_wonost(&cfg).unwrap();
        let f = worley_f1(cfg.rows, cfg.cols, &real.base_seeds).unwrap();
        for &(sr, sc) in &real.base_seeds.points {
            let (pr, pc) = (sr.floor() as usize, sc.floor() as usize);
            assert!(f[[pr, pc]] <= 0.71, "seed pixel distance {}", f[[pr, pc]]);
        }
    }

    #[test]
    fn worley_empty_seed_set_rejected() {
        assert!(SeedSet::new(vec![], 8, 8).unwrap().is_empty());
        let empty = SeedSet { points: vec![] };
        assert!(worley_f1(8, 8, &empty).is_err());
    }

    #[test]
    fn worley_matches_brute_force_oracle() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let pts: Vec<(f64, f64)> = (0..64)
                .map(|_| (rng.gen_range(0.0..64.0), rng.gen_range(0.0..64.0)))
                .collect();
            let seeds = SeedSet::new(pts.clone(), 64, 64).unwrap();
            let fast = worley_f1(64, 64, &seeds).unwrap();
            for r in 0..64 {
                for c in 0..64 {
                    let (py, px) = (r as f64 + 0.5, c as f64 + 0.5);
                    let brute = pts
                        .iter()
                        .map(|&(sr, sc)| ((sr - py).powi(2) + (sc - px).powi(2)).sqrt())
                        .fold(f64::INFINITY, f64::min);
                    assert!((fast[[r, c]] - brute).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn worley_permutation_invariant() {
        let pts = vec![(3.0, 4.0), (20.5, 9.25), (14.0, 30.0), (31.0, 1.0)];
        let a = worley_f1(32, 32, &SeedSet::new(pts.clone(), 32, 32).unwrap()).unwrap();
        let mut rev = pts.clone();
        rev.reverse();
        let b = worley_f1(32, 32, &SeedSet::new(rev, 32, 32).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generation_deterministic_per_seed() {
        let a = generate_wonost(&small_cfg(5)).unwrap();
        let b = generate_wonost(&small_cfg(5)).unwrap();
        assert_eq!(a.rgb, b.rgb);
    }

    #[test]
    fn green_components_equal_seed_count() {
        for seed in 0..100 {
            let cfg = WonostConfig {
                rows: 128,
                cols: 128,
                seed_count: 64,
                rng_seed: seed,
                ..WonostConfig::default()
            };
            let real = generate_wonost(&cfg).unwrap();
            let support: Mask = real.rgb.green.mapv(|v| (v > 0) as u8);
            let (_, count) = connected_components(&support);
            assert_eq!(count as usize, cfg.seed_count, "seed {seed}");
        }
    }

    #[test]
    fn blue_field_pointwise_below_red_field() {
        let cfg = small_cfg(8);
        let real = generate_wonost(&cfg).unwrap();
        let red = worley_f1(cfg.rows, cfg.cols, &real.base_seeds).unwrap();
        let blue = worley_f1(cfg.rows, cfg.cols, &real.blue_seeds).unwrap();
        for (b, r) in blue.iter().zip(red.iter()) {
            assert!(b <= r);
        }
    }

    #[test]
    fn alpha_solver_identity_and_monotone() {
        assert_eq!(solve_alpha_for_median_increase(0.0).unwrap(), BETA_SHAPE_A);
        let mut last = 0.0;
        for pct in [2.0, 4.0, 8.0, 12.0, 16.0, 24.0, 32.0] {
            let a = solve_alpha_for_median_increase(pct).unwrap();
            assert!(a > last, "alpha must increase with pct");
            last = a;
        }
        // an impossible median (>= 1) errors
        assert!(solve_alpha_for_median_increase(100.0 / 0.29 * 3.0).is_err());
    }

    fn median_u8(plane: &Array2<u8>) -> u8 {
        let mut v: Vec<u8> = plane.iter().copied().collect();
        v.sort_unstable();
        v[v.len() / 2]
    }

    #[test]
    fn perturb_red_identity_at_zero() {
        let real = generate_wonost(&small_cfg(11)).unwrap();
        let out = perturb_red(&real.rgb, 0.0).unwrap();
        let m_in = median_u8(&real.rgb.red) as i32;
        let m_out = median_u8(&out.red) as i32;
        assert!((m_in - m_out).abs() <= 1, "median {m_in} -> {m_out}");
        assert_eq!(out.green, real.rgb.green);
        assert_eq!(out.blue, real.rgb.blue);
    }

    #[test]
    fn perturb_red_median_ratio_and_monotonicity() {
        let real = generate_wonost(&small_cfg(12)).unwrap();
        let m0 = median_u8(&real.rgb.red) as f64;
        let out10 = perturb_red(&real.rgb, 10.0).unwrap();
        let ratio = median_u8(&out10.red) as f64 / m0;
        assert!((1.09..=1.11).contains(&ratio), "ratio {ratio}");
        let mut last = m0;
        for pct in [2.0, 4.0, 8.0, 12.0, 16.0, 24.0, 32.0] {
            let out = perturb_red(&real.rgb, pct).unwrap();
            let m = median_u8(&out.red) as f64;
            assert!(m > last, "median must strictly increase (pct {pct})");
            last = m;
        }
    }

    #[test]
    fn perturb_green_counts() {
        let real = generate_wonost(&small_cfg(13)).unwrap();
        let support = |img: &RgbImage| -> u32 {
            let s: Mask = img.green.mapv(|v| (v > 0) as u8);
            connected_components(&s).1
        };
        let n0 = support(&real.rgb);
        assert_eq!(n0 as usize, 24);

        let (out, rep) = perturb_green(&real.rgb, 0.0, 42).unwrap();
        assert_eq!(rep.removed, 0);
        assert_eq!(out, real.rgb);

        let (out, rep) = perturb_green(&real.rgb, 25.0, 42).unwrap();
        assert_eq!(rep.removed, 6);
        assert_eq!(support(&out), 18);

        let (out, rep) = perturb_green(&real.rgb, 100.0, 42).unwrap();
        assert!(rep.flagged);
        assert_eq!(out.green.iter().filter(|&&v| v > 0).count(), 0);
    }

    #[test]
    fn perturb_green_removals_nested_and_disjoint() {
        let real = generate_wonost(&small_cfg(14)).unwrap();
        let support: Mask = real.rgb.green.mapv(|v| (v > 0) as u8);
        let (labels, _) = connected_components(&support);
        let (out_small, _) = perturb_green(&real.rgb, 12.5, 7).unwrap();
        let (out_big, _) = perturb_green(&real.rgb, 50.0, 7).unwrap();
        // a label fully zeroed at 12.5% stays zeroed at 50% (nested prefixes)
        for (idx, &lab) in labels.indexed_iter() {
            if lab == 0 {
                continue;
            }
            if out_small.green[idx] == 0 && real.rgb.green[idx] > 0 {
                assert_eq!(out_big.green[idx], 0);
            }
            // survivors keep their exact pixels
            if out_small.green[idx] > 0 {
                assert_eq!(out_small.green[idx], real.rgb.green[idx]);
            }
        }
    }

    #[test]
    fn perturb_blue_identity_at_zero() {
        let real = generate_wonost(&small_cfg(15)).unwrap();
        let (out, rep) = perturb_blue(&real.rgb, 0.0, 3).unwrap();
        assert_eq!(rep.removed, 0);
        assert_eq!(out, real.rgb);
    }

    #[test]
    fn perturb_blue_expected_removal_fraction() {
        let real = generate_wonost(&small_cfg(16)).unwrap();
        let pct = 16.0;
        let trials = 200;
        let mut fractions = Vec::with_capacity(trials);
        for t in 0..trials {
            let (_, rep) = perturb_blue(&real.rgb, pct, 1000 + t as u64).unwrap();
            fractions.push(rep.removed as f64 / rep.total as f64);
        }
        let mean = fractions.iter().sum::<f64>() / trials as f64;
        let var = fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / trials as f64;
        let se = (var / trials as f64).sqrt();
        assert!(
            (mean - pct / 100.0).abs() <= 3.0 * se + 0.005,
            "mean removal {mean:.4} vs target {:.4} (se {se:.5})",
            pct / 100.0
        );
    }

    #[test]
    fn perturb_blue_grows_small_cells() {
        let real = generate_wonost(&small_cfg(17)).unwrap();
        let mean_cell_area = |img: &RgbImage| -> f64 {
            let n = detect_blue_cell_centers(img).len();
            (img.blue.len() as f64) / n as f64
        };
        let before = mean_cell_area(&real.rgb);
        let (out, rep) = perturb_blue(&real.rgb, 32.0, 9).unwrap();
        assert!(rep.removed > 0);
        let after = mean_cell_area(&out);
        assert!(after > before, "mean cell area {before} -> {after}");
    }

    #[test]
    fn perturbations_are_channel_local() {
        let real = generate_wonost(&small_cfg(18)).unwrap();
        let r = perturb_red(&real.rgb, 16.0).unwrap();
        assert_eq!(r.green, real.rgb.green);
        assert_eq!(r.blue, real.rgb.blue);
        let (g, _) = perturb_green(&real.rgb, 25.0, 4).unwrap();
        assert_eq!(g.red, real.rgb.red);
        assert_eq!(g.blue, real.rgb.blue);
        let (b, _) = perturb_blue(&real.rgb, 25.0, 4).unwrap();
        assert_eq!(b.red, real.rgb.red);
        assert_eq!(b.green, real.rgb.green);
    }
}
