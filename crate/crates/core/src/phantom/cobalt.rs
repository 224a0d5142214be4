//! Correlated-background lumpy triple (CoBaLT) phantom.
//!
//! A thresholded lumpy background defines background / foreground / cell
//! regions. Each region receives difference-of-Gaussians texture, the
//! foreground is shaded by its Euclidean distance map, and ridge crests of
//! the cell-mask distance map become spiny structures confined to the blue
//! channel. Edge bands are drawn from mask dilation/erosion differences.
//! Channel selection therefore segments every key visual feature exactly.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::imgproc::{
    difference_of_gaussians, edge_band, euclidean_distance_map, hessian_ridge_strength,
    mask_area, Mask,
};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CobaltConfig {
    pub rows: usize,
    pub cols: usize,
    /// Mean of the Poisson lump count.
    pub lump_count_mean: f64,
    /// Gaussian width (sigma, pixels) of a single lump.
    pub lump_width: f64,
    /// Field quantiles splitting background/foreground and foreground/cell.
    pub threshold_quantiles: (f64, f64),
    /// Two sigma pairs for the difference-of-Gaussians textures.
    pub dog_sigmas: [(f64, f64); 2],
    pub rng_seed: u64,
}

impl Default for CobaltConfig {
    fn default() -> Self {
        Self {
            rows: 256,
            cols: 256,
            lump_count_mean: 100.0,
            lump_width: 10.0,
            threshold_quantiles: (0.55, 0.85),
            dog_sigmas: [(1.0, 2.0), (2.0, 4.0)],
            rng_seed: 0,
        }
    }
}

impl CobaltConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows < 64 || self.cols < 64 {
            return Err(Error::InvalidInput(format!(
                "dims must be at least 64x64, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.lump_width > 0.0) {
            return Err(Error::InvalidInput("lump_width must be positive".into()));
        }
        let (a, b) = self.threshold_quantiles;
        if !(0.0 < a && a < b && b < 1.0) {
            return Err(Error::InvalidInput(
                "threshold quantiles must satisfy 0 < low < high < 1".into(),
            ));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.rng_seed = seed;
        c
    }
}

/// Ground-truth region masks of one realization. Background, foreground,
/// and cell partition the frame; the edge band may overlap any of them.
#[derive(Debug, Clone)]
pub struct CobaltMasks {
    pub background: Mask,
    pub foreground: Mask,
    pub cell: Mask,
    pub edge: Mask,
}

#[derive(Debug, Clone)]
pub struct CobaltRealization {
    pub rgb: RgbImage,
    pub masks: CobaltMasks,
}

/// Sum of isotropic Gaussian lumps at the given centers.
pub fn lumpy_field_from_centers(
    rows: usize,
    cols: usize,
    centers: &[(f64, f64)],
    width: f64,
) -> Array2<f64> {
    let mut field = Array2::zeros((rows, cols));
    let window = (4.0 * width).ceil() as isize;
    let inv = 1.0 / (2.0 * width * width);
    for &(cr, cc) in centers {
        let r0 = ((cr.floor() as isize) - window).max(0) as usize;
        let r1 = (((cr.ceil() as isize) + window + 1).min(rows as isize)) as usize;
        let c0 = ((cc.floor() as isize) - window).max(0) as usize;
        let c1 = (((cc.ceil() as isize) + window + 1).min(cols as isize)) as usize;
        for r in r0..r1 {
            for c in c0..c1 {
                let d2 = (r as f64 + 0.5 - cr).powi(2) + (c as f64 + 0.5 - cc).powi(2);
                field[[r, c]] += (-d2 * inv).exp();
            }
        }
    }
    field
}

/// A realization of the standard lumpy background: N ~ Poisson(mean)
/// Gaussian lumps at uniform random centers. Deterministic per seed.
pub fn lumpy_background(cfg: &CobaltConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, 0));
    let n = if cfg.lump_count_mean > 0.0 {
        Poisson::new(cfg.lump_count_mean)
            .map_err(|e| Error::InvalidInput(format!("lump_count_mean: {e}")))?
            .sample(&mut rng) as usize
    } else {
        0
    };
    let centers: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            (
                rng.gen_range(0.0..cfg.rows as f64),
                rng.gen_range(0.0..cfg.cols as f64),
            )
        })
        .collect();
    Ok(lumpy_field_from_centers(cfg.rows, cfg.cols, &centers, cfg.lump_width))
}

fn field_quantile(field: &Array2<f64>, q: f64) -> f64 {
    let mut vals: Vec<f64> = field.iter().copied().collect();
    vals.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((vals.len() as f64 - 1.0) * q).round() as usize;
    vals[idx]
}

fn unit_noise(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

/// Normalizes a field to zero mean and unit standard deviation (no-op on a
/// constant field).
fn standardize(field: &Array2<f64>) -> Array2<f64> {
    let n = field.len() as f64;
    let mean = field.sum() / n;
    let var = field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return field.clone();
    }
    let sd = var.sqrt();
    field.mapv(|v| (v - mean) / sd)
}

const SPINE_STRENGTH_FRACTION: f64 = 0.25;
const MAX_RETRIES: u32 = 8;

/// Runs the full CoBaLT pipeline for one realization.
///
/// Degenerate thresholding (an empty cell or foreground region) retries with
/// a new sub-seed a bounded number of times before erroring.
pub fn generate_cobalt(cfg: &CobaltConfig) -> Result<CobaltRealization> {
    cfg.validate()?;
    for attempt in 0..MAX_RETRIES {
        let sub = if attempt == 0 {
            cfg.clone()
        } else {
            cfg.with_seed(derive_seed(cfg.rng_seed, 1000 + attempt as u64))
        };
        if let Some(r) = try_generate(&sub)? {
            return Ok(r);
        }
    }
    Err(Error::Numerical(format!(
        "cobalt thresholding degenerate after {MAX_RETRIES} retries (seed {})",
        cfg.rng_seed
    )))
}

fn try_generate(cfg: &CobaltConfig) -> Result<Option<CobaltRealization>> {
    let (rows, cols) = (cfg.rows, cfg.cols);
    let field = lumpy_background(cfg)?;
    let t1 = field_quantile(&field, cfg.threshold_quantiles.0);
    let t2 = field_quantile(&field, cfg.threshold_quantiles.1);
    if !(t2 > t1) {
        return Ok(None);
    }
    let background: Mask = field.mapv(|v| (v < t1) as u8);
    let cell: Mask = field.mapv(|v| (v >= t2) as u8);
    let foreground: Mask =
        Array2::from_shape_fn((rows, cols), |idx| (field[idx] >= t1 && field[idx] < t2) as u8);
    if mask_area(&cell) == 0 || mask_area(&foreground) == 0 || mask_area(&background) == 0 {
        return Ok(None);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, 1));
    let bg_tex = standardize(&difference_of_gaussians(
        &unit_noise(rows, cols, &mut rng),
        cfg.dog_sigmas[0].0,
        cfg.dog_sigmas[0].1,
    ));
    let fg_tex = standardize(&difference_of_gaussians(
        &unit_noise(rows, cols, &mut rng),
        cfg.dog_sigmas[1].0,
        cfg.dog_sigmas[1].1,
    ));
    let cell_tex = standardize(&difference_of_gaussians(
        &unit_noise(rows, cols, &mut rng),
        cfg.dog_sigmas[0].0,
        cfg.dog_sigmas[0].1,
    ));

    // distance-map shading of the combined foreground+cell region
    let fg_all: Mask = Array2::from_shape_fn((rows, cols), |idx| {
        (foreground[idx] == 1 || cell[idx] == 1) as u8
    });
    let edm_fg = euclidean_distance_map(&fg_all);
    let edm_max = edm_fg.iter().cloned().fold(0.0f64, f64::max).max(1.0);
    let edm_norm = edm_fg.mapv(|v| v / edm_max);

    // spines: ridge crests of the cell-mask distance map
    let edm_cell = euclidean_distance_map(&cell);
    let strength = hessian_ridge_strength(&edm_cell, 1.0);
    let mut s_max = 0.0f64;
    for (idx, &s) in strength.indexed_iter() {
        if cell[idx] == 1 {
            s_max = s_max.max(s);
        }
    }
    let mut spine: Mask = Array2::zeros((rows, cols));
    if s_max > 0.0 {
        let thr = SPINE_STRENGTH_FRACTION * s_max;
        for r in 0..rows {
            for c in 0..cols {
                if cell[[r, c]] == 1 && strength[[r, c]] > thr {
                    spine[[r, c]] = 1;
                }
            }
        }
    }

    let edge_fg = edge_band(&fg_all);
    let edge_cell = edge_band(&cell);
    let edge: Mask = Array2::from_shape_fn((rows, cols), |idx| {
        (edge_fg[idx] == 1 || edge_cell[idx] == 1) as u8
    });

    let mut red = Array2::<f64>::zeros((rows, cols));
    let mut green = Array2::<f64>::zeros((rows, cols));
    let mut blue = Array2::<f64>::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let idx = [r, c];
            if background[idx] == 1 {
                red[idx] = 48.0 + 16.0 * bg_tex[idx];
                green[idx] = 40.0 + 13.0 * bg_tex[idx];
            } else if cell[idx] == 1 {
                red[idx] = 205.0 + 14.0 * cell_tex[idx];
                green[idx] = 150.0 + 12.0 * cell_tex[idx];
            } else {
                // yellow-orange foreground shaded by distance from the edge
                red[idx] = 120.0 + 60.0 * edm_norm[idx] + 10.0 * fg_tex[idx];
                green[idx] = 78.0 + 42.0 * edm_norm[idx] + 8.0 * fg_tex[idx];
            }
            if edge_fg[idx] == 1 && background[idx] == 0 {
                // bright coral rim on the foreground side of the boundary
                red[idx] = red[idx].max(235.0);
                green[idx] = green[idx].max(120.0);
            }
            if edge_cell[idx] == 1 && cell[idx] == 1 {
                red[idx] = red[idx].max(246.0);
                green[idx] = green[idx].max(170.0);
            }
            if spine[idx] == 1 {
                // spines are exclusively blue and confined to the cell mask
                let rel = (strength[idx] / s_max).clamp(0.0, 1.0);
                blue[idx] = 140.0 + 115.0 * rel;
            }
        }
    }
    let clamp_u8 = |f: &Array2<f64>| f.mapv(|v| v.round().clamp(0.0, 255.0) as u8);
    let rgb = RgbImage::new(clamp_u8(&red), clamp_u8(&green), clamp_u8(&blue))?;
    Ok(Some(CobaltRealization {
        rgb,
        masks: CobaltMasks {
            background,
            foreground,
            cell,
            edge,
        },
    }))
}

/// Zeroes the blue channel, exactly removing the spiny structures and
/// nothing else.
pub fn ablate_spines(r: &CobaltRealization) -> CobaltRealization {
    let mut out = r.clone();
    out.rgb.blue.fill(0);
    out
}

/// Permutes the background pixels of the red and green channels by one
/// shared random permutation. Per-channel background histograms are
/// preserved exactly; the foreground is untouched.
///
/// Returns the permuted realization and a flag that is true when the
/// background was empty and the call was a no-op.
pub fn shuffle_background(r: &CobaltRealization, seed: u64) -> (CobaltRealization, bool) {
    let positions: Vec<(usize, usize)> = r
        .masks
        .background
        .indexed_iter()
        .filter(|(_, &v)| v == 1)
        .map(|(idx, _)| idx)
        .collect();
    if positions.is_empty() {
        return (r.clone(), true);
    }
    let mut perm: Vec<usize> = (0..positions.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..perm.len()).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    let mut out = r.clone();
    let red_vals: Vec<u8> = positions.iter().map(|&p| r.rgb.red[p]).collect();
    let green_vals: Vec<u8> = positions.iter().map(|&p| r.rgb.green[p]).collect();
    for (dst, &src) in perm.iter().enumerate() {
        out.rgb.red[positions[dst]] = red_vals[src];
        out.rgb.green[positions[dst]] = green_vals[src];
    }
    (out, false)
}
