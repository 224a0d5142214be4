//! ROI segmentation into background, foreground, and the special feature
//! region within the foreground.

use ndarray::Array2;

use crate::image::GrayImage;
use crate::imgproc::{histogram, otsu_threshold, otsu_two_thresholds, Mask};

/// Background / foreground / special masks for one image.
///
/// Invariants: special is a subset of foreground, background and foreground
/// are disjoint, and together background and foreground cover the frame.
#[derive(Debug, Clone)]
pub struct RoiMaskSet {
    pub background: Mask,
    pub foreground: Mask,
    pub special: Mask,
    /// Set when thresholding collapsed (constant or two-valued image).
    pub degenerate: bool,
}

/// Deterministic two-threshold Otsu segmentation.
///
/// Pixels at or below the lower threshold are background; the rest are
/// foreground; foreground pixels above the upper threshold form the special
/// region. Constant images map entirely to background.
pub fn segment_rois(img: &GrayImage) -> RoiMaskSet {
    let hist = histogram(&img.pixels);
    let dims = img.pixels.dim();
    if let Some((t1, t2)) = otsu_two_thresholds(&hist) {
        let background = img.pixels.mapv(|v| (v <= t1) as u8);
        let foreground = img.pixels.mapv(|v| (v > t1) as u8);
        let special = img.pixels.mapv(|v| (v > t2) as u8);
        return RoiMaskSet {
            background,
            foreground,
            special,
            degenerate: false,
        };
    }
    if let Some(t) = otsu_threshold(&hist) {
        // two-valued image: no special region is distinguishable
        let background = img.pixels.mapv(|v| (v <= t) as u8);
        let foreground = img.pixels.mapv(|v| (v > t) as u8);
        return RoiMaskSet {
            background,
            foreground,
            special: Array2::zeros(dims),
            degenerate: true,
        };
    }
    RoiMaskSet {
        background: Array2::from_elem(dims, 1),
        foreground: Array2::zeros(dims),
        special: Array2::zeros(dims),
        degenerate: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn constant_image_all_background() {
        let img = GrayImage::new(Array2::from_elem((8, 8), 77)).unwrap();
        let m = segment_rois(&img);
        assert!(m.degenerate);
        assert!(m.background.iter().all(|&v| v == 1));
        assert_eq!(m.foreground.iter().filter(|&&v| v == 1).count(), 0);
        assert_eq!(m.special.iter().filter(|&&v| v == 1).count(), 0);
    }

    #[test]
    fn three_plateau_image_recovers_plateaus() {
        // left third 0, middle third 128, right third 255
        let img = GrayImage::new(Array2::from_shape_fn((30, 30), |(_, c)| {
            if c < 10 {
                0u8
            } else if c < 20 {
                128
            } else {
                255
            }
        }))
        .unwrap();
        let m = segment_rois(&img);
        assert!(!m.degenerate);
        for ((_, c), &b) in m.background.indexed_iter() {
            assert_eq!(b == 1, c < 10);
        }
        for ((_, c), &s) in m.special.indexed_iter() {
            assert_eq!(s == 1, c >= 20);
        }
        for ((_, c), &f) in m.foreground.indexed_iter() {
            assert_eq!(f == 1, c >= 10);
        }
    }

    #[test]
    fn invariants_hold_on_noise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let img = GrayImage::new(Array2::from_shape_fn((32, 32), |_| rng.gen())).unwrap();
        let m = segment_rois(&img);
        for r in 0..32 {
            for c in 0..32 {
                let bg = m.background[[r, c]];
                let fg = m.foreground[[r, c]];
                let sp = m.special[[r, c]];
                assert_eq!(bg + fg, 1, "bg/fg partition");
                if sp == 1 {
                    assert_eq!(fg, 1, "special inside foreground");
                }
            }
        }
    }
}
