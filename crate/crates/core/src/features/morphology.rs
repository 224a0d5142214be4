//! Region-shape summaries: area fraction, perimeter-to-area ratio,
//! convexity, and solidity.

use crate::imgproc::{convex_hull, polygon_double_area, polygon_perimeter, Mask};

/// Morphology summary of one ROI mask. An empty mask yields
/// `(0, NaN, NaN, NaN)` with the degenerate flag set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorphologyFeatures {
    /// Mask area as a percentage of the frame, in [0, 100].
    pub pct_of_image: f64,
    pub perimeter_to_area: f64,
    /// Convex-hull perimeter over mask perimeter, in (0, 1].
    pub convexity: f64,
    /// Mask area over convex-hull area, in (0, 1].
    pub solidity: f64,
    pub degenerate: bool,
}

/// Perimeter as the count of unit pixel edges exposed to the outside
/// (including the frame border).
pub fn pixel_edge_perimeter(mask: &Mask) -> u64 {
    let (rows, cols) = mask.dim();
    let mut edges = 0u64;
    for r in 0..rows {
        for c in 0..cols {
            if mask[[r, c]] == 0 {
                continue;
            }
            let neighbors = [
                (r as isize - 1, c as isize),
                (r as isize + 1, c as isize),
                (r as isize, c as isize - 1),
                (r as isize, c as isize + 1),
            ];
            for (nr, nc) in neighbors {
                let outside = nr < 0
                    || nr >= rows as isize
                    || nc < 0
                    || nc >= cols as isize
                    || mask[[nr as usize, nc as usize]] == 0;
                if outside {
                    edges += 1;
                }
            }
        }
    }
    edges
}

/// Corner lattice points of every boundary pixel of the mask. The convex
/// hull of these equals the hull of the full pixel-square union.
pub fn boundary_corner_points(mask: &Mask) -> Vec<(i64, i64)> {
    let (rows, cols) = mask.dim();
    let mut pts = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if mask[[r, c]] == 0 {
                continue;
            }
            let mut on_boundary = false;
            'scan: for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    if nr < 0
                        || nr >= rows as isize
                        || nc < 0
                        || nc >= cols as isize
                        || mask[[nr as usize, nc as usize]] == 0
                    {
                        on_boundary = true;
                        break 'scan;
                    }
                }
            }
            if on_boundary {
                let (ri, ci) = (r as i64, c as i64);
                pts.extend_from_slice(&[
                    (ri, ci),
                    (ri + 1, ci),
                    (ri, ci + 1),
                    (ri + 1, ci + 1),
                ]);
            }
        }
    }
    pts
}

pub fn morphology_features(mask: &Mask) -> MorphologyFeatures {
    let (rows, cols) = mask.dim();
    let area: u64 = mask.iter().map(|&v| v as u64).sum();
    if area == 0 {
        return MorphologyFeatures {
            pct_of_image: 0.0,
            perimeter_to_area: f64::NAN,
            convexity: f64::NAN,
            solidity: f64::NAN,
            degenerate: true,
        };
    }
    let pct = 100.0 * area as f64 / (rows * cols) as f64;
    let perimeter = pixel_edge_perimeter(mask) as f64;
    let hull = convex_hull(&boundary_corner_points(mask));
    let hull_area = polygon_double_area(&hull) as f64 / 2.0;
    let hull_perimeter = polygon_perimeter(&hull);
    MorphologyFeatures {
        pct_of_image: pct,
        perimeter_to_area: perimeter / area as f64,
        convexity: hull_perimeter / perimeter,
        solidity: area as f64 / hull_area,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn rect_mask(rows: usize, cols: usize, r0: usize, r1: usize, c0: usize, c1: usize) -> Mask {
        Array2::from_shape_fn((rows, cols), |(r, c)| {
            (r >= r0 && r < r1 && c >= c0 && c < c1) as u8
        })
    }

    #[test]
    fn full_frame_is_its_own_hull() {
        let m = rect_mask(20, 30, 0, 20, 0, 30);
        let f = morphology_features(&m);
        assert_eq!(f.pct_of_image, 100.0);
        assert_abs_diff_eq!(f.solidity, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.convexity, 1.0, epsilon = 1e-12);
        assert!(!f.degenerate);
    }

    #[test]
    fn filled_square_in_larger_frame() {
        let m = rect_mask(100, 100, 40, 50, 40, 50);
        let f = morphology_features(&m);
        assert_abs_diff_eq!(f.pct_of_image, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.solidity, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.convexity, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.perimeter_to_area, 40.0 / 100.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_mask_degenerate() {
        let m: Mask = Array2::zeros((10, 10));
        let f = morphology_features(&m);
        assert_eq!(f.pct_of_image, 0.0);
        assert!(f.perimeter_to_area.is_nan());
        assert!(f.convexity.is_nan());
        assert!(f.solidity.is_nan());
        assert!(f.degenerate);
    }

    /// Gift-wrapping hull oracle over the full corner point set.
    fn hull_area_oracle(mask: &Mask) -> f64 {
        let (rows, cols) = mask.dim();
        let mut pts = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if mask[[r, c]] == 1 {
                    for (dr, dc) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                        pts.push((r as i64 + dr, c as i64 + dc));
                    }
                }
            }
        }
        pts.sort_unstable();
        pts.dedup();
        // gift wrapping
        let start = *pts.iter().min_by_key(|p| (p.1, p.0)).unwrap();
        let mut hull = vec![start];
        let mut current = start;
        loop {
            let mut candidate = pts[0];
            if candidate == current {
                candidate = pts[pts.len() - 1];
            }
            for &p in &pts {
                if p == current {
                    continue;
                }
                let cross = (candidate.0 - current.0) * (p.1 - current.1)
                    - (candidate.1 - current.1) * (p.0 - current.0);
                let further = {
                    let da = (candidate.0 - current.0).pow(2) + (candidate.1 - current.1).pow(2);
                    let db = (p.0 - current.0).pow(2) + (p.1 - current.1).pow(2);
                    db > da
                };
                if cross > 0 || (cross == 0 && further) {
                    candidate = p;
                }
            }
            if candidate == start {
                break;
            }
            hull.push(candidate);
            current = candidate;
        }
        polygon_double_area(&hull) as f64 / 2.0
    }

    #[test]
    fn plus_pentomino_solidity_matches_hull_oracle() {
        // plus sign with 10x10 pixel arms
        let mut m: Mask = Array2::zeros((40, 40));
        for r in 10..20 {
            for c in 0..30 {
                m[[r, c]] = 1;
            }
        }
        for r in 0..30 {
            for c in 10..20 {
                m[[r, c]] = 1;
            }
        }
        let f = morphology_features(&m);
        let area = 500.0;
        let oracle = area / hull_area_oracle(&m);
        assert_abs_diff_eq!(f.solidity, oracle, epsilon = 1e-12);
        assert!(f.solidity < 1.0);
        assert!(f.convexity < 1.0);
    }

    #[test]
    fn padding_invariance_except_pct() {
        let small = rect_mask(30, 30, 5, 15, 8, 20);
        let mut large: Mask = Array2::zeros((60, 60));
        for r in 0..30 {
            for c in 0..30 {
                large[[r + 10, c + 10]] = small[[r, c]];
            }
        }
        let fs = morphology_features(&small);
        let fl = morphology_features(&large);
        assert_abs_diff_eq!(fs.perimeter_to_area, fl.perimeter_to_area, epsilon = 1e-12);
        assert_abs_diff_eq!(fs.convexity, fl.convexity, epsilon = 1e-12);
        assert_abs_diff_eq!(fs.solidity, fl.solidity, epsilon = 1e-12);
        // pct scales exactly by the area ratio
        assert_abs_diff_eq!(fs.pct_of_image / fl.pct_of_image, 4.0, epsilon = 1e-12);
    }
}
