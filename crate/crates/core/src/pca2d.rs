//! Two-dimensional PCA: row- and column-side average covariances, bilinear
//! projection, masked reconstruction, and rank-weighted component sampling
//! for dose simulation.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Eigenvalues below this fraction of the largest are clamped to zero.
const EIGVAL_CLAMP_REL: f64 = 1e-12;

/// Fit options. `col_cov_divide_by_c` keeps the printed `1/(NC)`
/// normalization of the column-side average covariance; disabling it drops
/// the extra `1/C`. Either way the eigenvectors, loadings, and
/// reconstructions are identical; only the recorded spectrum scales.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Pca2dOptions {
    pub col_cov_divide_by_c: bool,
}

impl Default for Pca2dOptions {
    fn default() -> Self {
        Self {
            col_cov_divide_by_c: true,
        }
    }
}

/// Fitted two-dimensional PCA model.
#[derive(Debug, Clone)]
pub struct Pca2dModel {
    pub rows: usize,
    pub cols: usize,
    pub n_images: usize,
    /// C x C average covariance over row realizations.
    pub cov_rows: DMatrix<f64>,
    /// R x R average covariance over column realizations.
    pub cov_cols: DMatrix<f64>,
    /// C x C orthonormal, eigenvalue-ordered columns.
    pub proj_rows: DMatrix<f64>,
    /// R x R orthonormal, eigenvalue-ordered columns.
    pub proj_cols: DMatrix<f64>,
    pub eigvals_rows: Vec<f64>,
    pub eigvals_cols: Vec<f64>,
    /// Grayscale range of the training ensemble.
    pub grayscale_range: (u8, u8),
    pub options: Pca2dOptions,
}

/// Kept rows/columns of the loading matrix (diagonals of the binary
/// selection matrices).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMask {
    pub rows_kept: Vec<u8>,
    pub cols_kept: Vec<u8>,
}

impl SelectionMask {
    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows_kept: vec![1; rows],
            cols_kept: vec![1; cols],
        }
    }

    /// Keep the top-k eigenvalue-ranked components on each side.
    pub fn top_k(rows: usize, cols: usize, k: usize) -> Self {
        let mut m = Self {
            rows_kept: vec![0; rows],
            cols_kept: vec![0; cols],
        };
        for i in 0..k.min(rows) {
            m.rows_kept[i] = 1;
        }
        for i in 0..k.min(cols) {
            m.cols_kept[i] = 1;
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rows_kept.iter().any(|&v| v == 1) || !self.cols_kept.iter().any(|&v| v == 1) {
            return Err(Error::InvalidInput(
                "selection mask must keep at least one row and one column".into(),
            ));
        }
        Ok(())
    }
}

/// Expansion coefficients of one image, with the image's own grayscale range
/// carried along for the post-reconstruction rescale.
#[derive(Debug, Clone)]
pub struct LoadingMatrix {
    pub coeffs: DMatrix<f64>,
    pub source_range: (u8, u8),
}

fn to_matrix(img: &GrayImage) -> DMatrix<f64> {
    let (r, c) = img.pixels.dim();
    DMatrix::from_fn(r, c, |i, j| img.pixels[[i, j]] as f64)
}

/// Symmetric eigendecomposition with eigenvalue-descending ordering, stable
/// tie-break by original index, and small-negative clamping.
fn ordered_symmetric_eigen(mat: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = mat.nrows();
    let sym = (mat + mat.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut vecs = DMatrix::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    let max_val = order
        .first()
        .map(|&i| eig.eigenvalues[i].abs())
        .unwrap_or(0.0);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvalues[src];
        if !v.is_finite() {
            return Err(Error::Numerical("eigendecomposition produced non-finite values".into()));
        }
        if v < EIGVAL_CLAMP_REL * max_val {
            v = v.max(0.0);
            if v < EIGVAL_CLAMP_REL * max_val {
                v = 0.0;
            }
        }
        vals.push(v);
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((vecs, vals))
}

/// Fits the model from an ensemble of same-sized grayscale images.
pub fn fit(images: &[GrayImage], options: Pca2dOptions) -> Result<Pca2dModel> {
    if images.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 images to fit, got {}",
            images.len()
        )));
    }
    let (rows, cols) = images[0].pixels.dim();
    let mut cov_rows = DMatrix::<f64>::zeros(cols, cols);
    let mut cov_cols = DMatrix::<f64>::zeros(rows, rows);
    let mut lo = u8::MAX;
    let mut hi = u8::MIN;
    for img in images {
        if img.pixels.dim() != (rows, cols) {
            return Err(Error::Dimension(format!(
                "ensemble dimension mismatch: expected {rows}x{cols}, got {}x{}",
                img.rows(),
                img.cols()
            )));
        }
        for &v in img.pixels.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let m = to_matrix(img);
        // center columns: subtract the per-column mean (the mean of the R
        // row-realizations), repeated along rows
        let col_means = m.row_mean();
        let mut centered_r = m.clone();
        for j in 0..cols {
            let mu = col_means[j];
            for i in 0..rows {
                centered_r[(i, j)] -= mu;
            }
        }
        cov_rows += centered_r.transpose() * &centered_r / rows as f64;

        // center rows: subtract the per-row mean (the mean of the C
        // column-realizations), repeated along columns
        let row_means = m.column_mean();
        let mut centered_c = m;
        for i in 0..rows {
            let mu = row_means[i];
            for j in 0..cols {
                centered_c[(i, j)] -= mu;
            }
        }
        cov_cols += &centered_c * centered_c.transpose();
    }
    let n = images.len() as f64;
    cov_rows /= n;
    let col_norm = if options.col_cov_divide_by_c {
        n * cols as f64
    } else {
        n
    };
    cov_cols /= col_norm;

    let (proj_rows, eigvals_rows) = ordered_symmetric_eigen(&cov_rows)?;
    let (proj_cols, eigvals_cols) = ordered_symmetric_eigen(&cov_cols)?;
    Ok(Pca2dModel {
        rows,
        cols,
        n_images: images.len(),
        cov_rows,
        cov_cols,
        proj_rows,
        proj_cols,
        eigvals_rows,
        eigvals_cols,
        grayscale_range: (lo, hi),
        options,
    })
}

/// Bilinear projection `L = P_C^T I P_R`.
pub fn project(model: &Pca2dModel, img: &GrayImage) -> Result<LoadingMatrix> {
    if img.pixels.dim() != (model.rows, model.cols) {
        return Err(Error::Dimension(format!(
            "image {}x{} does not match model {}x{}",
            img.rows(),
            img.cols(),
            model.rows,
            model.cols
        )));
    }
    let m = to_matrix(img);
    let coeffs = model.proj_cols.transpose() * m * &model.proj_rows;
    let mut lo = u8::MAX;
    let mut hi = u8::MIN;
    for &v in img.pixels.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(LoadingMatrix {
        coeffs,
        source_range: (lo, hi),
    })
}

/// Masked bilinear reconstruction before rescaling:
/// `P_C B_C L B_R^T P_R^T` as a float field.
pub fn reconstruct_float(
    model: &Pca2dModel,
    loading: &LoadingMatrix,
    mask: &SelectionMask,
) -> Result<DMatrix<f64>> {
    mask.validate()?;
    if mask.rows_kept.len() != model.rows || mask.cols_kept.len() != model.cols {
        return Err(Error::Dimension(
            "selection mask does not match model dimensions".into(),
        ));
    }
    if loading.coeffs.nrows() != model.rows || loading.coeffs.ncols() != model.cols {
        return Err(Error::Dimension(
            "loading matrix does not match model dimensions".into(),
        ));
    }
    let mut masked = loading.coeffs.clone();
    for (i, &keep) in mask.rows_kept.iter().enumerate() {
        if keep == 0 {
            masked.set_row(i, &DVector::zeros(model.cols).transpose());
        }
    }
    for (j, &keep) in mask.cols_kept.iter().enumerate() {
        if keep == 0 {
            masked.set_column(j, &DVector::zeros(model.rows));
        }
    }
    Ok(&model.proj_cols * masked * model.proj_rows.transpose())
}

/// Masked reconstruction, affinely rescaled to the source image's own
/// grayscale range (compensating omitted-component offsets) and quantized
/// to 8 bits.
pub fn reconstruct(
    model: &Pca2dModel,
    loading: &LoadingMatrix,
    mask: &SelectionMask,
) -> Result<GrayImage> {
    let raw = reconstruct_float(model, loading, mask)?;
    let (lo, hi) = loading.source_range;
    let (mut fmin, mut fmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in raw.iter() {
        fmin = fmin.min(v);
        fmax = fmax.max(v);
    }
    let out = Array2::from_shape_fn((model.rows, model.cols), |(r, c)| {
        let v = raw[(r, c)];
        let scaled = if fmax > fmin {
            lo as f64 + (v - fmin) / (fmax - fmin) * (hi as f64 - lo as f64)
        } else {
            // constant reconstruction collapses to the midpoint of the range
            0.5 * (lo as f64 + hi as f64)
        };
        scaled.round().clamp(0.0, 255.0) as u8
    });
    GrayImage::new(out)
}

/// Samples a selection mask of `m` components per side, without replacement,
/// with probability inversely proportional to eigenvalue rank (rank 1 is the
/// largest eigenvalue). Deterministic per seed.
pub fn dose_mask(model: &Pca2dModel, m: usize, seed: u64) -> Result<SelectionMask> {
    let limit = model.rows.min(model.cols);
    if m < 1 || m > limit {
        return Err(Error::InvalidInput(format!(
            "component count {m} out of range [1, {limit}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample_side = |n: usize| -> Vec<u8> {
        let mut kept = vec![0u8; n];
        let mut weights: Vec<f64> = (0..n).map(|rank| 1.0 / (rank + 1) as f64).collect();
        for _ in 0..m.min(n) {
            let total: f64 = weights.iter().sum();
            let mut u = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in weights.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            kept[chosen] = 1;
            weights[chosen] = 0.0;
        }
        kept
    };
    Ok(SelectionMask {
        rows_kept: sample_side(model.rows),
        cols_kept: sample_side(model.cols),
    })
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    rows: usize,
    cols: usize,
    n_images: usize,
    grayscale_range: (u8, u8),
    eigvals_rows: Vec<f64>,
    eigvals_cols: Vec<f64>,
    col_cov_divide_by_c: bool,
}

const MODEL_MAGIC: &[u8; 4] = b"P2DM";

fn write_matrix(w: &mut impl Write, m: &DMatrix<f64>) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_matrix(r: &mut impl Read, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let mut buf = [0u8; 8];
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            r.read_exact(&mut buf)?;
            m[(i, j)] = f64::from_le_bytes(buf);
        }
    }
    Ok(m)
}

impl Pca2dModel {
    /// Persists the model as a binary container: magic, version, JSON header
    /// (dims, ensemble size, grayscale range, spectra), then the covariance
    /// and projection matrices as little-endian 64-bit floats.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(MODEL_MAGIC)?;
        f.write_all(&1u32.to_le_bytes())?;
        let header = serde_json::to_vec(&ModelHeader {
            rows: self.rows,
            cols: self.cols,
            n_images: self.n_images,
            grayscale_range: self.grayscale_range,
            eigvals_rows: self.eigvals_rows.clone(),
            eigvals_cols: self.eigvals_cols.clone(),
            col_cov_divide_by_c: self.options.col_cov_divide_by_c,
        })
        .map_err(|e| Error::Data(e.to_string()))?;
        f.write_all(&(header.len() as u32).to_le_bytes())?;
        f.write_all(&header)?;
        write_matrix(&mut f, &self.cov_rows)?;
        write_matrix(&mut f, &self.cov_cols)?;
        write_matrix(&mut f, &self.proj_rows)?;
        write_matrix(&mut f, &self.proj_cols)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        f.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Data(format!(
                "{}: not a 2DPCA model container",
                path.display()
            )));
        }
        let mut u32buf = [0u8; 4];
        f.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != 1 {
            return Err(Error::Data(format!("unsupported model version {version}")));
        }
        f.read_exact(&mut u32buf)?;
        let header_len = u32::from_le_bytes(u32buf) as usize;
        let mut header_bytes = vec![0u8; header_len];
        f.read_exact(&mut header_bytes)?;
        let header: ModelHeader =
            serde_json::from_slice(&header_bytes).map_err(|e| Error::Data(e.to_string()))?;
        let (rows, cols) = (header.rows, header.cols);
        let cov_rows = read_matrix(&mut f, cols, cols)?;
        let cov_cols = read_matrix(&mut f, rows, rows)?;
        let proj_rows = read_matrix(&mut f, cols, cols)?;
        let proj_cols = read_matrix(&mut f, rows, rows)?;
        Ok(Self {
            rows,
            cols,
            n_images: header.n_images,
            cov_rows,
            cov_cols,
            proj_rows,
            proj_cols,
            eigvals_rows: header.eigvals_rows,
            eigvals_cols: header.eigvals_cols,
            grayscale_range: header.grayscale_range,
            options: Pca2dOptions {
                col_cov_divide_by_c: header.col_cov_divide_by_c,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    fn gray(a: Array2<u8>) -> GrayImage {
        GrayImage::new(a).unwrap()
    }

    fn random_ensemble(n: usize, rows: usize, cols: usize, seed: u64) -> Vec<GrayImage> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| gray(Array2::from_shape_fn((rows, cols), |_| rng.gen())))
            .collect()
    }

    /// Naive double-loop covariance oracle following the printed formulas.
    fn cov_oracle(images: &[GrayImage], divide_by_c: bool) -> (DMatrix<f64>, DMatrix<f64>) {
        let (rows, cols) = images[0].pixels.dim();
        let n = images.len();
        let mut sig_r = DMatrix::<f64>::zeros(cols, cols);
        let mut sig_c = DMatrix::<f64>::zeros(rows, rows);
        for img in images {
            let m = DMatrix::from_fn(rows, cols, |i, j| img.pixels[[i, j]] as f64);
            // row realizations of a length-C variate
            for a in 0..cols {
                for b in 0..cols {
                    let mu_a: f64 = (0..rows).map(|i| m[(i, a)]).sum::<f64>() / rows as f64;
                    let mu_b: f64 = (0..rows).map(|i| m[(i, b)]).sum::<f64>() / rows as f64;
                    let mut acc = 0.0;
                    for i in 0..rows {
                        acc += (m[(i, a)] - mu_a) * (m[(i, b)] - mu_b);
                    }
                    sig_r[(a, b)] += acc / rows as f64;
                }
            }
            // column realizations of a length-R variate
            for a in 0..rows {
                for b in 0..rows {
                    let mu_a: f64 = (0..cols).map(|j| m[(a, j)]).sum::<f64>() / cols as f64;
                    let mu_b: f64 = (0..cols).map(|j| m[(b, j)]).sum::<f64>() / cols as f64;
                    let mut acc = 0.0;
                    for j in 0..cols {
                        acc += (m[(a, j)] - mu_a) * (m[(b, j)] - mu_b);
                    }
                    sig_c[(a, b)] += acc;
                }
            }
        }
        sig_r /= n as f64;
        sig_c /= if divide_by_c { (n * cols) as f64 } else { n as f64 };
        (sig_r, sig_c)
    }

    #[test]
    fn constant_ensemble_zero_covariance() {
        let imgs: Vec<GrayImage> = (0..3)
            .map(|_| gray(Array2::from_elem((4, 4), 7)))
            .collect();
        let model = fit(&imgs, Pca2dOptions::default()).unwrap();
        assert_eq!(model.cov_rows.amax(), 0.0);
        assert_eq!(model.cov_cols.amax(), 0.0);
        assert_eq!(model.grayscale_range, (7, 7));
    }

    #[test]
    fn two_by_two_hand_case_matches_oracle() {
        let imgs = vec![
            gray(array![[0u8, 1], [0, 1]]),
            gray(array![[1u8, 0], [1, 0]]),
        ];
        let model = fit(&imgs, Pca2dOptions::default()).unwrap();
        let (sig_r, sig_c) = cov_oracle(&imgs, true);
        assert_eq!(model.cov_rows, sig_r);
        assert_eq!(model.cov_cols, sig_c);
        // columns are constant within each image, so row-side covariance is 0
        assert_eq!(model.cov_rows.amax(), 0.0);
        // hand expansion: each image contributes [[0.25,0.25],[0.25,0.25]]
        // before the 1/(NC) normalization with C=2
        assert_abs_diff_eq!(model.cov_cols[(0, 0)], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(model.cov_cols[(0, 1)], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn random_ensemble_matches_oracle() {
        let imgs = random_ensemble(8, 16, 16, 3);
        for divide in [true, false] {
            let model = fit(
                &imgs,
                Pca2dOptions {
                    col_cov_divide_by_c: divide,
                },
            )
            .unwrap();
            let (sig_r, sig_c) = cov_oracle(&imgs, divide);
            assert!((model.cov_rows.clone() - sig_r).amax() < 1e-10);
            assert!((model.cov_cols.clone() - sig_c).amax() < 1e-10);
        }
    }

    #[test]
    fn covariances_symmetric_and_psd() {
        let imgs = random_ensemble(6, 12, 10, 5);
        let model = fit(&imgs, Pca2dOptions::default()).unwrap();
        assert!((model.cov_rows.clone() - model.cov_rows.transpose()).amax() < 1e-12);
        assert!((model.cov_cols.clone() - model.cov_cols.transpose()).amax() < 1e-12);
        assert!(model.eigvals_rows.iter().all(|&v| v >= 0.0));
        assert!(model.eigvals_cols.iter().all(|&v| v >= 0.0));
        assert!(model.eigvals_rows.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn projections_orthonormal() {
        let imgs = random_ensemble(10, 20, 14, 8);
        let model = fit(&imgs, Pca2dOptions::default()).unwrap();
        let idr = model.proj_rows.transpose() * &model.proj_rows;
        let idc = model.proj_cols.transpose() * &model.proj_cols;
        let dev_r = (idr - DMatrix::identity(14, 14)).norm();
        let dev_c = (idc - DMatrix::identity(20, 20)).norm();
        assert!(dev_r < 1e-8, "row projector deviation {dev_r}");
        assert!(dev_c < 1e-8, "col projector deviation {dev_c}");
    }

    #[test]
    fn identity_basis_projects_to_image() {
        let imgs = random_ensemble(2, 5, 5, 1);
        let mut model = fit(&imgs, Pca2dOptions::default()).unwrap();
        model.proj_rows = DMatrix::identity(5, 5);
        model.proj_cols = DMatrix::identity(5, 5);
        let img = &imgs[0];
        let l = project(&model, img).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(l.coeffs[(i, j)], img.pixels[[i, j]] as f64);
            }
        }
    }

    #[test]
    fn projection_preserves_frobenius_norm() {
        let imgs = random_ensemble(6, 16, 16, 21);
        let model = fit(&imgs, Pca2dOptions::default()).unwrap();
        for img in &imgs {
            let l = project(&model, img).unwrap();
            let norm_img = to_matrix(img).norm();
            assert_abs_diff_eq!(l.coeffs.norm(), norm_img, epsilon = 1e-9 * norm_img.max(1.0));
        }
    }

    #[test]
    fn full_mask_round_trip_within_one_gray_level() {
        let imgs = random_ensemble(8, 16, 16, 13);
        let model = fit(&imgs, Pca2dOptions::default()).unwrap();
        let mask = SelectionMask::full(16, 16);
        for img in &imgs {
            let l = project(&model, img).unwrap();
            let rec = reconstruct(&model, &l, &mask).unwrap();
            for (a, b) in rec.pixels.iter().zip(img.pixels.iter()) {
                assert!((*a as i16 - *b as i16).abs() <= 1);
            }
        }
    }

    #[test]
    fn rank_one_mask_gives_rank_one_image() {
        let imgs = random_ensemble(4, 10, 10, 17);
        let model = fit(&imgs, Pca2dOptions::default()).unwrap();
        let l = project(&model, &imgs[0]).unwrap();
        let mask = SelectionMask::top_k(10, 10, 1);
        let raw = reconstruct_float(&model, &l, &mask).unwrap();
        // every 2x2 minor of a rank-1 matrix vanishes
        let scale = raw.amax().max(1.0);
        for i in 0..9 {
            for j in 0..9 {
                let minor = raw[(i, j)] * raw[(i + 1, j + 1)] - raw[(i, j + 1)] * raw[(i + 1, j)];
                assert!(minor.abs() < 1e-9 * scale * scale, "minor {minor}");
            }
        }
    }

    #[test]
    fn nested_masks_monotone_error() {
        let imgs = random_ensemble(20, 12, 12, 23);
        let model = fit(&imgs, Pca2dOptions::default()).unwrap();
        for img in &imgs {
            let l = project(&model, img).unwrap();
            let target = to_matrix(img);
            let mut last_err = f64::INFINITY;
            for k in [3usize, 6, 9, 12] {
                let mask = SelectionMask::top_k(12, 12, k);
                let raw = reconstruct_float(&model, &l, &mask).unwrap();
                let err = (raw - &target).norm();
                assert!(
                    err <= last_err + 1e-9,
                    "error must not grow as the nested mask grows (k={k})"
                );
                last_err = err;
            }
        }
    }

    #[test]
    fn all_zero_mask_rejected() {
        let imgs = random_ensemble(2, 4, 4, 2);
        let model = fit(&imgs, Pca2dOptions::default()).unwrap();
        let l = project(&model, &imgs[0]).unwrap();
        let mask = SelectionMask {
            rows_kept: vec![0; 4],
            cols_kept: vec![0; 4],
        };
        assert!(reconstruct(&model, &l, &mask).is_err());
    }

    #[test]
    fn dose_mask_full_and_deterministic() {
        let imgs = random_ensemble(3, 8, 8, 31);
        let model = fit(&imgs, Pca2dOptions::default()).unwrap();
        let full = dose_mask(&model, 8, 99).unwrap();
        assert_eq!(full, SelectionMask::full(8, 8));
        let a = dose_mask(&model, 3, 7).unwrap();
        let b = dose_mask(&model, 3, 7).unwrap();
        assert_eq!(a, b);
        assert!(dose_mask(&model, 0, 1).is_err());
        assert!(dose_mask(&model, 9, 1).is_err());
    }

    #[test]
    fn dose_mask_single_component_matches_rank_weights() {
        let imgs = random_ensemble(3, 8, 8, 37);
        let model = fit(&imgs, Pca2dOptions::default()).unwrap();
        let trials = 100_000usize;
        let mut counts = vec![0u64; 8];
        for t in 0..trials {
            let m = dose_mask(&model, 1, t as u64).unwrap();
            let idx = m.rows_kept.iter().position(|&v| v == 1).unwrap();
            counts[idx] += 1;
        }
        let total_w: f64 = (1..=8).map(|r| 1.0 / r as f64).sum();
        for (rank0, &cnt) in counts.iter().enumerate() {
            let p = (1.0 / (rank0 + 1) as f64) / total_w;
            let expect = trials as f64 * p;
            let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (cnt as f64 - expect).abs() < 3.0 * sigma,
                "rank {} count {} expect {:.0} sigma {:.1}",
                rank0 + 1,
                cnt,
                expect,
                sigma
            );
        }
    }

    #[test]
    fn model_persistence_round_trip() {
        let imgs = random_ensemble(5, 9, 7, 41);
        let model = fit(&imgs, Pca2dOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.p2dm");
        model.save(&path).unwrap();
        let back = Pca2dModel::load(&path).unwrap();
        assert_eq!(model.rows, back.rows);
        assert_eq!(model.cols, back.cols);
        assert_eq!(model.n_images, back.n_images);
        assert_eq!(model.grayscale_range, back.grayscale_range);
        assert_eq!(model.cov_rows, back.cov_rows);
        assert_eq!(model.cov_cols, back.cov_cols);
        assert_eq!(model.proj_rows, back.proj_rows);
        assert_eq!(model.proj_cols, back.proj_cols);
        assert_eq!(model.eigvals_rows, back.eigvals_rows);
        // a reconstruction through the loaded model is bit-identical
        let l = project(&model, &imgs[0]).unwrap();
        let mask = SelectionMask::top_k(9, 7, 4);
        let a = reconstruct(&model, &l, &mask).unwrap();
        let b = reconstruct(&back, &project(&back, &imgs[0]).unwrap(), &mask).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let imgs = random_ensemble(3, 8, 8, 2);
        let model = fit(&imgs, Pca2dOptions::default()).unwrap();
        let other = gray(Array2::zeros((9, 8)));
        assert!(project(&model, &other).is_err());
        let mut bad = random_ensemble(2, 8, 8, 3);
        bad.push(gray(Array2::zeros((4, 4))));
        assert!(fit(&bad, Pca2dOptions::default()).is_err());
    }
}
