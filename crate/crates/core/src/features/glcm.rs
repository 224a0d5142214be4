//! Asymmetric, normalized gray-level co-occurrence matrices and the
//! intra-level correlation summary.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::imgproc::Mask;

/// The four co-occurrence orientations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GlcmAngle {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

pub const ALL_ANGLES: [GlcmAngle; 4] = [
    GlcmAngle::Deg0,
    GlcmAngle::Deg45,
    GlcmAngle::Deg90,
    GlcmAngle::Deg135,
];

impl GlcmAngle {
    /// (row, col) displacement for a given pixel distance.
    pub fn offset(self, d: usize) -> (isize, isize) {
        let d = d as isize;
        match self {
            GlcmAngle::Deg0 => (0, d),
            GlcmAngle::Deg45 => (-d, d),
            GlcmAngle::Deg90 => (-d, 0),
            GlcmAngle::Deg135 => (-d, -d),
        }
    }

    pub fn degrees(self) -> u16 {
        match self {
            GlcmAngle::Deg0 => 0,
            GlcmAngle::Deg45 => 45,
            GlcmAngle::Deg90 => 90,
            GlcmAngle::Deg135 => 135,
        }
    }
}

/// Quantization depth and pair offsets for texture extraction.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GlcmSpec {
    pub levels: u8,
    pub distances: Vec<usize>,
}

impl Default for GlcmSpec {
    fn default() -> Self {
        Self {
            levels: 16,
            distances: vec![1, 2, 4, 8],
        }
    }
}

impl GlcmSpec {
    pub fn new(levels: u8, distances: Vec<usize>) -> Result<Self> {
        if levels < 2 {
            return Err(Error::InvalidInput("GLCM needs at least 2 levels".into()));
        }
        if distances.is_empty()
            || distances.windows(2).any(|w| w[0] >= w[1])
            || distances[0] == 0
        {
            return Err(Error::InvalidInput(
                "distances must be strictly increasing positive integers".into(),
            ));
        }
        Ok(Self { levels, distances })
    }
}

/// A normalized co-occurrence matrix. `pairs == 0` marks a degenerate ROI
/// with no qualifying pixel pairs (matrix all zeros).
#[derive(Debug, Clone)]
pub struct Glcm {
    pub matrix: Array2<f64>,
    pub pairs: u64,
}

impl Glcm {
    pub fn is_degenerate(&self) -> bool {
        self.pairs == 0
    }
}

/// Tallies ordered level pairs `(p, p+offset)` with both endpoints inside the
/// ROI, normalized to sum 1. No transpose symmetrization is applied.
pub fn glcm(
    levels_img: &Array2<u8>,
    roi_mask: &Mask,
    k: u8,
    distance: usize,
    angle: GlcmAngle,
) -> Result<Glcm> {
    if levels_img.dim() != roi_mask.dim() {
        return Err(Error::Dimension(
            "level image and ROI mask must share dimensions".into(),
        ));
    }
    if distance == 0 {
        return Err(Error::InvalidInput("pair distance must be positive".into()));
    }
    let (rows, cols) = levels_img.dim();
    let (dr, dc) = angle.offset(distance);
    let mut counts = Array2::<f64>::zeros((k as usize, k as usize));
    let mut pairs = 0u64;
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            let (rr, cc) = (r + dr, c + dc);
            if rr < 0 || rr >= rows as isize || cc < 0 || cc >= cols as isize {
                continue;
            }
            let p = (r as usize, c as usize);
            let q = (rr as usize, cc as usize);
            if roi_mask[p] == 0 || roi_mask[q] == 0 {
                continue;
            }
            let (i, j) = (levels_img[p] as usize, levels_img[q] as usize);
            counts[[i, j]] += 1.0;
            pairs += 1;
        }
    }
    if pairs > 0 {
        counts.mapv_inplace(|v| v / pairs as f64);
    }
    Ok(Glcm {
        matrix: counts,
        pairs,
    })
}

/// Intra-level correlation of a normalized GLCM:
/// `(Σ i·j·p(i,j) − μx·μy) / (σx·σy)` over the row/column index marginals.
///
/// Returns `(value, degenerate)`; a zero marginal deviation yields
/// `(0.0, true)`.
pub fn glcm_correlation(g: &Glcm) -> (f64, bool) {
    let k = g.matrix.nrows();
    let mut mu_x = 0.0;
    let mut mu_y = 0.0;
    for i in 0..k {
        for j in 0..k {
            let p = g.matrix[[i, j]];
            mu_x += i as f64 * p;
            mu_y += j as f64 * p;
        }
    }
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    let mut cross = 0.0;
    for i in 0..k {
        for j in 0..k {
            let p = g.matrix[[i, j]];
            var_x += (i as f64 - mu_x).powi(2) * p;
            var_y += (j as f64 - mu_y).powi(2) * p;
            cross += i as f64 * j as f64 * p;
        }
    }
    let denom = var_x.sqrt() * var_y.sqrt();
    if denom == 0.0 {
        return (0.0, true);
    }
    ((cross - mu_x * mu_y) / denom, false)
}
