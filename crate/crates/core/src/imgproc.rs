//! Shared raster primitives: separable Gaussian filtering, exact Euclidean
//! distance maps, Hessian ridge strength, binary morphology, connected
//! components, Otsu thresholds, and integer convex hulls.

use ndarray::Array2;

/// Binary mask newtype over a u8 array (0 = outside, 1 = inside).
pub type Mask = Array2<u8>;

/// Number of set pixels (u8 `sum()` would wrap).
pub fn mask_area(mask: &Mask) -> u64 {
    mask.iter().map(|&v| v as u64).sum()
}

fn reflect(i: isize, n: isize) -> usize {
    // reflect-101 boundary: -1 -> 1, n -> n-2
    let mut i = i;
    while i < 0 || i >= n {
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * (n - 1) - i;
        }
    }
    i as usize
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable Gaussian blur with reflected boundaries.
pub fn gaussian_blur(field: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if sigma <= 0.0 {
        return field.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (rows, cols) = field.dim();
    let mut tmp = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let cc = reflect(c as isize + ki as isize - radius, cols as isize);
                acc += kv * field[[r, cc]];
            }
            tmp[[r, c]] = acc;
        }
    }
    let mut out = Array2::zeros((rows, cols));
    for c in 0..cols {
        for r in 0..rows {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let rr = reflect(r as isize + ki as isize - radius, rows as isize);
                acc += kv * tmp[[rr, c]];
            }
            out[[r, c]] = acc;
        }
    }
    out
}

/// Difference of Gaussians band-pass filter.
pub fn difference_of_gaussians(field: &Array2<f64>, sigma_lo: f64, sigma_hi: f64) -> Array2<f64> {
    let a = gaussian_blur(field, sigma_lo);
    let b = gaussian_blur(field, sigma_hi);
    a - b
}

// 1-D squared distance transform (Felzenszwalb & Huttenlocher).
fn dt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        out[q] = d * d + f[p];
    }
}

/// Exact Euclidean distance map: for each pixel inside the mask, the distance
/// to the nearest pixel outside it (0 outside the mask).
pub fn euclidean_distance_map(mask: &Mask) -> Array2<f64> {
    let (rows, cols) = mask.dim();
    const FAR: f64 = 1e12;
    let mut sq = Array2::from_shape_fn((rows, cols), |(r, c)| {
        if mask[[r, c]] == 0 {
            0.0
        } else {
            FAR
        }
    });
    // columns then rows
    let mut buf = vec![0.0f64; rows.max(cols)];
    let mut out_buf = vec![0.0f64; rows.max(cols)];
    for c in 0..cols {
        for r in 0..rows {
            buf[r] = sq[[r, c]];
        }
        dt_1d(&buf[..rows], &mut out_buf[..rows]);
        for r in 0..rows {
            sq[[r, c]] = out_buf[r];
        }
    }
    for r in 0..rows {
        for c in 0..cols {
            buf[c] = sq[[r, c]];
        }
        dt_1d(&buf[..cols], &mut out_buf[..cols]);
        for c in 0..cols {
            sq[[r, c]] = out_buf[c];
        }
    }
    sq.mapv(f64::sqrt)
}

/// Largest-magnitude negative-curvature response of the Hessian, after
/// Gaussian pre-smoothing. High values mark ridge crests of the input field.
pub fn hessian_ridge_strength(field: &Array2<f64>, presmooth_sigma: f64) -> Array2<f64> {
    let f = gaussian_blur(field, presmooth_sigma);
    let (rows, cols) = f.dim();
    let mut out = Array2::zeros((rows, cols));
    let at = |r: isize, c: isize| -> f64 {
        f[[reflect(r, rows as isize), reflect(c, cols as isize)]]
    };
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            let fxx = at(r, c - 1) - 2.0 * at(r, c) + at(r, c + 1);
            let fyy = at(r - 1, c) - 2.0 * at(r, c) + at(r + 1, c);
            let fxy = (at(r + 1, c + 1) - at(r + 1, c - 1) - at(r - 1, c + 1)
                + at(r - 1, c - 1))
                / 4.0;
            let tr = fxx + fyy;
            let det_term = ((fxx - fyy).powi(2) + 4.0 * fxy * fxy).sqrt();
            let lambda_min = (tr - det_term) / 2.0;
            out[[r as usize, c as usize]] = (-lambda_min).max(0.0);
        }
    }
    out
}

/// 3x3 square dilation.
pub fn dilate3(mask: &Mask) -> Mask {
    let (rows, cols) = mask.dim();
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                let rr = r as isize + dr;
                let cc = c as isize + dc;
                if rr >= 0 && rr < rows as isize && cc >= 0 && cc < cols as isize
                    && mask[[rr as usize, cc as usize]] == 1
                {
                    return 1;
                }
            }
        }
        0
    })
}

/// 3x3 square erosion.
pub fn erode3(mask: &Mask) -> Mask {
    let (rows, cols) = mask.dim();
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                let rr = r as isize + dr;
                let cc = c as isize + dc;
                if rr < 0 || rr >= rows as isize || cc < 0 || cc >= cols as isize
                    || mask[[rr as usize, cc as usize]] == 0
                {
                    return 0;
                }
            }
        }
        1
    })
}

/// Band of pixels gained by dilation or lost by erosion.
pub fn edge_band(mask: &Mask) -> Mask {
    let d = dilate3(mask);
    let e = erode3(mask);
    let mut out = Array2::zeros(mask.dim());
    ndarray::Zip::from(&mut out).and(&d).and(&e).for_each(|o, &dv, &ev| {
        *o = (dv == 1 && ev == 0) as u8;
    });
    out
}

/// 8-connected component labels in raster-scan order.
///
/// Returns (labels, count); background pixels get label 0, components are
/// labeled 1..=count.
pub fn connected_components(mask: &Mask) -> (Array2<u32>, u32) {
    let (rows, cols) = mask.dim();
    let mut labels: Array2<u32> = Array2::zeros((rows, cols));
    let mut next = 0u32;
    let mut stack = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if mask[[r, c] ] == 0 || labels[[r, c]] != 0 {
                continue;
            }
            next += 1;
            labels[[r, c]] = next;
            stack.push((r, c));
            while let Some((pr, pc)) = stack.pop() {
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let rr = pr as isize + dr;
                        let cc = pc as isize + dc;
                        if rr < 0 || rr >= rows as isize || cc < 0 || cc >= cols as isize {
                            continue;
                        }
                        let (rr, cc) = (rr as usize, cc as usize);
                        if mask[[rr, cc]] == 1 && labels[[rr, cc]] == 0 {
                            labels[[rr, cc]] = next;
                            stack.push((rr, cc));
                        }
                    }
                }
            }
        }
    }
    (labels, next)
}

/// Otsu's two-class threshold on a 256-bin histogram. Pixels with value
/// `<= t` form the lower class. Returns None for a constant image.
pub fn otsu_threshold(hist: &[u64; 256]) -> Option<u8> {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return None;
    }
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &h)| i as f64 * h as f64).sum();
    let mut w_b = 0.0f64;
    let mut sum_b = 0.0f64;
    let mut best = (f64::NEG_INFINITY, None);
    for t in 0..255usize {
        w_b += hist[t] as f64;
        if w_b == 0.0 {
            continue;
        }
        let w_f = total as f64 - w_b;
        if w_f == 0.0 {
            break;
        }
        sum_b += t as f64 * hist[t] as f64;
        let mean_b = sum_b / w_b;
        let mean_f = (sum_all - sum_b) / w_f;
        let var = w_b * w_f * (mean_b - mean_f).powi(2);
        if var > best.0 {
            best = (var, Some(t as u8));
        }
    }
    best.1
}

/// Two-threshold (three-class) Otsu: exhaustive search maximizing
/// between-class variance. Returns (t1, t2) with classes
/// `v <= t1`, `t1 < v <= t2`, `v > t2`, or None if fewer than three
/// distinct values exist.
pub fn otsu_two_thresholds(hist: &[u64; 256]) -> Option<(u8, u8)> {
    let distinct = hist.iter().filter(|&&h| h > 0).count();
    if distinct < 3 {
        return None;
    }
    // prefix sums over counts and intensity mass
    let mut cum_n = [0f64; 257];
    let mut cum_s = [0f64; 257];
    for i in 0..256 {
        cum_n[i + 1] = cum_n[i] + hist[i] as f64;
        cum_s[i + 1] = cum_s[i] + i as f64 * hist[i] as f64;
    }
    let total = cum_n[256];
    let class = |lo: usize, hi: usize| -> (f64, f64) {
        // pixels with value in [lo, hi]
        let n = cum_n[hi + 1] - cum_n[lo];
        let s = cum_s[hi + 1] - cum_s[lo];
        (n, s)
    };
    let mut best = (f64::NEG_INFINITY, 0u8, 0u8);
    for t1 in 0..254usize {
        if hist[..=t1].iter().all(|&h| h == 0) {
            continue;
        }
        for t2 in (t1 + 1)..255usize {
            let (n0, s0) = class(0, t1);
            let (n1, s1) = class(t1 + 1, t2);
            let (n2, s2) = class(t2 + 1, 255);
            if n0 == 0.0 || n1 == 0.0 || n2 == 0.0 {
                continue;
            }
            let mu = cum_s[256] / total;
            let var = n0 * (s0 / n0 - mu).powi(2)
                + n1 * (s1 / n1 - mu).powi(2)
                + n2 * (s2 / n2 - mu).powi(2);
            if var > best.0 {
                best = (var, t1 as u8, t2 as u8);
            }
        }
    }
    if best.0.is_finite() {
        Some((best.1, best.2))
    } else {
        None
    }
}

pub fn histogram(pixels: &Array2<u8>) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &v in pixels.iter() {
        h[v as usize] += 1;
    }
    h
}

/// Convex hull of integer points by Andrew's monotone chain.
///
/// Returns hull vertices in counter-clockwise order; collinear points are
/// dropped. Exact in integer arithmetic.
pub fn convex_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts: Vec<(i64, i64)> = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| -> i64 {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Twice the signed area of a polygon (shoelace), exact for integer vertices.
pub fn polygon_double_area(hull: &[(i64, i64)]) -> i64 {
    if hull.len() < 3 {
        return 0;
    }
    let mut acc = 0i64;
    for i in 0..hull.len() {
        let (x1, y1) = hull[i];
        let (x2, y2) = hull[(i + 1) % hull.len()];
        acc += x1 * y2 - x2 * y1;
    }
    acc.abs()
}

pub fn polygon_perimeter(hull: &[(i64, i64)]) -> f64 {
    if hull.len() < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..hull.len() {
        let (x1, y1) = hull[i];
        let (x2, y2) = hull[(i + 1) % hull.len()];
        acc += (((x2 - x1).pow(2) + (y2 - y1).pow(2)) as f64).sqrt();
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn blur_preserves_mass() {
        let mut f = Array2::zeros((16, 16));
        f[[8, 8]] = 1.0;
        let g = gaussian_blur(&f, 1.5);
        assert_abs_diff_eq!(g.sum(), 1.0, epsilon = 1e-9);
        // peak stays at the impulse
        let (mut best, mut arg) = (f64::MIN, (0, 0));
        for (idx, &v) in g.indexed_iter() {
            if v > best {
                best = v;
                arg = idx;
            }
        }
        assert_eq!(arg, (8, 8));
    }

    #[test]
    fn edm_matches_brute_force() {
        let mut mask: Mask = Array2::zeros((12, 17));
        // an L-shaped blob plus an isolated pixel
        for r in 2..9 {
            for c in 3..7 {
                mask[[r, c]] = 1;
            }
        }
        for c in 3..14 {
            mask[[8, c]] = 1;
        }
        mask[[1, 15]] = 1;
        let edm = euclidean_distance_map(&mask);
        let (rows, cols) = mask.dim();
        for r in 0..rows {
            for c in 0..cols {
                let mut best = f64::INFINITY;
                for rr in 0..rows {
                    for cc in 0..cols {
                        if mask[[rr, cc]] == 0 {
                            let d = (((r as f64) - rr as f64).powi(2)
                                + ((c as f64) - cc as f64).powi(2))
                            .sqrt();
                            best = best.min(d);
                        }
                    }
                }
                if mask[[r, c]] == 0 {
                    best = 0.0;
                }
                assert_abs_diff_eq!(edm[[r, c]], best, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn morphology_edge_band() {
        let mut mask: Mask = Array2::zeros((10, 10));
        for r in 3..7 {
            for c in 3..7 {
                mask[[r, c]] = 1;
            }
        }
        let band = edge_band(&mask);
        // interior survives erosion, so it is not in the band
        assert_eq!(band[[5, 5]], 0);
        // boundary and halo pixels are
        assert_eq!(band[[3, 3]], 1);
        assert_eq!(band[[2, 3]], 1);
        assert_eq!(band[[0, 0]], 0);
    }

    #[test]
    fn components_count_and_labels() {
        let mut mask: Mask = Array2::zeros((8, 8));
        mask[[0, 0]] = 1;
        mask[[1, 1]] = 1; // diagonal touch: same component under 8-connectivity
        mask[[5, 5]] = 1;
        let (labels, n) = connected_components(&mask);
        assert_eq!(n, 2);
        assert_eq!(labels[[0, 0]], labels[[1, 1]]);
        assert_ne!(labels[[0, 0]], labels[[5, 5]]);
    }

    #[test]
    fn otsu_bimodal() {
        let mut hist = [0u64; 256];
        hist[10] = 500;
        hist[200] = 500;
        let t = otsu_threshold(&hist).unwrap();
        assert!((10..200).contains(&t));
        assert!(otsu_threshold(&{
            let mut h = [0u64; 256];
            h[42] = 100;
            h
        })
        .is_none());
    }

    #[test]
    fn otsu_trimodal_separates_plateaus() {
        let mut hist = [0u64; 256];
        hist[0] = 300;
        hist[128] = 300;
        hist[255] = 300;
        let (t1, t2) = otsu_two_thresholds(&hist).unwrap();
        assert!(t1 < 128 && 128 <= t2 as usize && (t2 as usize) < 255);
    }

    #[test]
    fn hull_of_square_with_interior_point() {
        let pts = vec![(0, 0), (4, 0), (4, 4), (0, 4), (2, 2), (4, 2)];
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        assert_eq!(polygon_double_area(&hull), 32);
        assert_abs_diff_eq!(polygon_perimeter(&hull), 16.0);
    }

    #[test]
    fn ridge_strength_peaks_on_crest() {
        // A tent field along the middle row has its crest there.
        let f = Array2::from_shape_fn((15, 15), |(r, _)| 7.0 - ((r as f64) - 7.0).abs());
        let s = hessian_ridge_strength(&f, 1.0);
        for c in 3..12 {
            assert!(s[[7, c]] > s[[3, c]]);
            assert!(s[[7, c]] > s[[11, c]]);
        }
    }
}
