//! Interpretable image features: per-ROI morphology plus GLCM intra-level
//! correlation, assembled into the fixed 60-dimensional vector.

mod glcm;
mod morphology;
mod quantize;
mod segment;

pub use glcm::{glcm, glcm_correlation, Glcm, GlcmAngle, GlcmSpec, ALL_ANGLES};
pub use morphology::{morphology_features, MorphologyFeatures};
pub use quantize::{equal_probability_quantize, QuantizedImage};
pub use segment::{segment_rois, RoiMaskSet};

use crate::error::Result;
use crate::image::GrayImage;
use crate::similarity::FeatureVector;

const ROI_NAMES: [&str; 3] = ["background", "foreground", "special"];
const MORPH_NAMES: [&str; 4] = ["pct", "perim_area", "convexity", "solidity"];

/// The fixed, documented feature name schema: for each ROI in order
/// (background, foreground, special), four morphology summaries followed by
/// GLCM correlation at each distance and angle, named
/// `roi.metric`, or `roi.glcm_corr.d{distance}.a{angle}`.
pub fn feature_names(spec: &GlcmSpec) -> Vec<String> {
    let mut names = Vec::with_capacity(ROI_NAMES.len() * (4 + 4 * spec.distances.len()));
    for roi in ROI_NAMES {
        for m in MORPH_NAMES {
            names.push(format!("{roi}.{m}"));
        }
        for &d in &spec.distances {
            for angle in ALL_ANGLES {
                names.push(format!("{roi}.glcm_corr.d{d}.a{}", angle.degrees()));
            }
        }
    }
    names
}

/// Extraction output: the named feature vector and the names of components
/// that were produced by a degenerate statistic (NaN morphology of an empty
/// ROI, pair-less GLCM, or zero-variance correlation).
#[derive(Debug, Clone)]
pub struct ExtractedFeatures {
    pub vector: FeatureVector,
    pub flagged: Vec<String>,
}

/// Computes the full per-ROI feature vector (with the default spec: 60
/// components) for one grayscale image.
///
/// Degenerate ROIs propagate NaN components, which binarization later maps
/// to 0 bits.
pub fn feature_vector_60(img: &GrayImage, spec: &GlcmSpec) -> Result<ExtractedFeatures> {
    let rois = segment_rois(img);
    let quant = equal_probability_quantize(img, spec.levels)?;
    let names = feature_names(spec);
    let mut values = Vec::with_capacity(names.len());
    let mut flagged = Vec::new();
    let masks = [&rois.background, &rois.foreground, &rois.special];
    for (roi_idx, mask) in masks.iter().enumerate() {
        let morph = morphology_features(mask);
        let morph_vals = [
            morph.pct_of_image,
            morph.perimeter_to_area,
            morph.convexity,
            morph.solidity,
        ];
        for (mi, &v) in morph_vals.iter().enumerate() {
            if morph.degenerate && mi > 0 {
                flagged.push(format!("{}.{}", ROI_NAMES[roi_idx], MORPH_NAMES[mi]));
            }
            values.push(v);
        }
        for &d in &spec.distances {
            for angle in ALL_ANGLES {
                let g = glcm(&quant.levels, mask, spec.levels, d, angle)?;
                if g.is_degenerate() {
                    values.push(f64::NAN);
                    flagged.push(format!(
                        "{}.glcm_corr.d{d}.a{}",
                        ROI_NAMES[roi_idx],
                        angle.degrees()
                    ));
                } else {
                    let (corr, degenerate) = glcm_correlation(&g);
                    if degenerate {
                        flagged.push(format!(
                            "{}.glcm_corr.d{d}.a{}",
                            ROI_NAMES[roi_idx],
                            angle.degrees()
                        ));
                    }
                    values.push(corr);
                }
            }
        }
    }
    Ok(ExtractedFeatures {
        vector: FeatureVector::new(values, names)?,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};

    #[test]
    fn sixty_unique_ordered_names() {
        let spec = GlcmSpec::default();
        let names = feature_names(&spec);
        assert_eq!(names.len(), 60);
        let set: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(set.len(), 60);
        assert_eq!(names[0], "background.pct");
        assert_eq!(names[4], "background.glcm_corr.d1.a0");
        assert_eq!(names[59], "special.glcm_corr.d8.a135");
    }

    #[test]
    fn extraction_is_deterministic() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let img = GrayImage::new(Array2::from_shape_fn((48, 48), |_| rng.gen())).unwrap();
        let spec = GlcmSpec::default();
        let a = feature_vector_60(&img, &spec).unwrap();
        let b = feature_vector_60(&img, &spec).unwrap();
        assert_eq!(a.vector.values.len(), 60);
        // bit-for-bit identical
        for (x, y) in a.vector.values.iter().zip(&b.vector.values) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn constant_image_flags_degenerate_components() {
        let img = GrayImage::new(Array2::from_elem((16, 16), 42)).unwrap();
        let out = feature_vector_60(&img, &GlcmSpec::default()).unwrap();
        // foreground and special are empty: their morphology is NaN
        let idx = out
            .vector
            .names
            .iter()
            .position(|n| n == "foreground.solidity")
            .unwrap();
        assert!(out.vector.values[idx].is_nan());
        assert!(!out.flagged.is_empty());
        // background covers the frame
        let bg_pct = out
            .vector
            .names
            .iter()
            .position(|n| n == "background.pct")
            .unwrap();
        assert_eq!(out.vector.values[bg_pct], 100.0);
    }
}
