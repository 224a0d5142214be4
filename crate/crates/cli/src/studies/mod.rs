//! The four batch study workflows and their shared plumbing.

pub mod ablation;
pub mod agreement;
pub mod cross;
pub mod perturbation;
pub mod self_sim;

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use simtally::features::{feature_vector_60, GlcmSpec};
use simtally::image::{ChannelSelect, GrayImage, RgbImage};
use simtally::similarity::{
    binarize, partition, weighted_similarity_index, AbsentPolicy, BinaryFeatureVector,
    FeatureVector, SetPartition, ToleranceSpec,
};

use crate::error::{CliError, CliResult};
use crate::features_io::FeatureTable;
use crate::manifest::ingest_ensemble;

/// Where a workflow's tolerance spec comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToleranceSource {
    /// Percent band around the archetype ensemble median of each feature.
    Percent { pct: f64 },
    /// A ToleranceSpec JSON document on disk.
    File { path: std::path::PathBuf },
}

impl Default for ToleranceSource {
    fn default() -> Self {
        ToleranceSource::Percent { pct: 20.0 }
    }
}

/// Loads a grayscale ensemble from a directory (channel-reduced when the
/// images are RGB), or a precomputed feature table from a `.csv` path.
pub fn load_feature_table(
    path: &Path,
    channel: ChannelSelect,
    glcm: &GlcmSpec,
) -> CliResult<FeatureTable> {
    if path.extension().map(|e| e == "csv").unwrap_or(false) {
        return FeatureTable::read_csv(path);
    }
    let manifest = ingest_ensemble(path)?;
    let images: Vec<(String, GrayImage)> = manifest
        .entries
        .iter()
        .map(|e| {
            let rgb = RgbImage::read_png(&e.file)?;
            Ok((e.id.clone(), rgb.channel(channel)))
        })
        .collect::<CliResult<Vec<_>>>()?;
    extract_table(&images, glcm)
}

/// Parallel feature extraction preserving input order.
pub fn extract_table(images: &[(String, GrayImage)], glcm: &GlcmSpec) -> CliResult<FeatureTable> {
    let extracted: Vec<_> = images
        .par_iter()
        .map(|(id, img)| feature_vector_60(img, glcm).map(|f| (id.clone(), f)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::from)?;
    let mut table = FeatureTable::new(
        extracted
            .first()
            .map(|(_, f)| f.vector.names.clone())
            .ok_or_else(|| CliError::Data("empty ensemble".into()))?,
    );
    for (id, f) in extracted {
        table.push(id, f.vector.values, &f.flagged);
    }
    Ok(table)
}

fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn std_dev(values: &[f64]) -> f64 {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

/// Derives a per-feature tolerance spec from an archetype feature table.
pub fn derive_tolerance(
    source: &ToleranceSource,
    archetype: &FeatureTable,
) -> CliResult<ToleranceSpec> {
    match source {
        ToleranceSource::File { path } => {
            let text = std::fs::read_to_string(path)?;
            Ok(ToleranceSpec::from_json(&text).map_err(CliError::from)?)
        }
        ToleranceSource::Percent { pct } => {
            let mut lower = Vec::with_capacity(archetype.names.len());
            let mut upper = Vec::with_capacity(archetype.names.len());
            for j in 0..archetype.names.len() {
                let col = archetype.column(j);
                let center = median(&col);
                let zero_eps = (std_dev(&col) * 0.2).max(f64::EPSILON);
                let interval = if center.is_finite() {
                    simtally::tolerance::percent_tolerance(center, *pct, zero_eps)
                        .map_err(CliError::from)?
                } else {
                    // all-NaN column: an empty placeholder band that nothing
                    // (including NaN) can fall inside of in a meaningful way
                    simtally::tolerance::percent_tolerance(0.0, *pct, zero_eps)
                        .map_err(CliError::from)?
                };
                lower.push(interval.lower);
                upper.push(interval.upper);
            }
            Ok(
                ToleranceSpec::with_unit_weights(lower, upper, archetype.names.clone())
                    .map_err(CliError::from)?,
            )
        }
    }
}

/// Applies per-name weights from a spec onto a retained-universe partition.
pub fn weights_for_partition(spec: &ToleranceSpec, p: &SetPartition) -> Vec<f64> {
    p.names()
        .iter()
        .map(|n| {
            spec.names
                .iter()
                .position(|s| s == n)
                .map(|i| spec.weights[i])
                .unwrap_or(1.0)
        })
        .collect()
}

/// Per-pair similarity outcome.
#[derive(Debug, Clone)]
pub struct PairScore {
    pub subject_idx: usize,
    pub archetype_idx: usize,
    pub wsi_weighted: f64,
    pub wsi_uniform: f64,
    pub euclidean: f64,
    pub universe: usize,
    pub degenerate: bool,
}

/// Scores one subject/archetype feature-vector pair.
pub fn score_pair(
    subject: &FeatureVector,
    archetype: &FeatureVector,
    spec: &ToleranceSpec,
    policy: AbsentPolicy,
) -> CliResult<(SetPartition, BinaryFeatureVector, BinaryFeatureVector)> {
    let s_bits = binarize(subject, spec).map_err(CliError::from)?;
    let a_bits = binarize(archetype, spec).map_err(CliError::from)?;
    let part = partition(&s_bits, &a_bits, policy).map_err(CliError::from)?;
    Ok((part, s_bits, a_bits))
}

/// Euclidean distance over coordinates finite in both vectors.
pub fn euclidean_finite(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Samples `count` unique index pairs from an `n_sub x n_arch` grid without
/// replacement. With `exclude_diagonal`, pairs with equal indices are
/// excluded (intra-ensemble sampling).
pub fn sample_pairs(
    n_sub: usize,
    n_arch: usize,
    count: usize,
    exclude_diagonal: bool,
    seed: u64,
) -> CliResult<Vec<(usize, usize)>> {
    let total = if exclude_diagonal {
        n_sub * n_arch - n_sub.min(n_arch)
    } else {
        n_sub * n_arch
    };
    if count == 0 {
        return Err(CliError::Usage("pair count must be at least 1".into()));
    }
    if count > total {
        return Err(CliError::Data(format!(
            "requested {count} unique pairs but only {total} exist"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if total <= 1 << 22 {
        let mut all: Vec<(usize, usize)> = Vec::with_capacity(total);
        for s in 0..n_sub {
            for a in 0..n_arch {
                if exclude_diagonal && s == a {
                    continue;
                }
                all.push((s, a));
            }
        }
        for i in (1..all.len()).rev() {
            let j = rng.gen_range(0..=i);
            all.swap(i, j);
        }
        all.truncate(count);
        Ok(all)
    } else {
        let mut seen = HashSet::with_capacity(count);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let s = rng.gen_range(0..n_sub);
            let a = rng.gen_range(0..n_arch);
            if exclude_diagonal && s == a {
                continue;
            }
            if seen.insert((s, a)) {
                out.push((s, a));
            }
        }
        Ok(out)
    }
}

/// Scores sampled pairs between two feature tables.
#[allow(clippy::too_many_arguments)]
pub fn score_sampled_pairs(
    subject: &FeatureTable,
    archetype: &FeatureTable,
    pairs: &[(usize, usize)],
    spec: &ToleranceSpec,
    policy: AbsentPolicy,
    min_universe: Option<usize>,
) -> CliResult<Vec<PairScore>> {
    pairs
        .par_iter()
        .map(|&(si, ai)| {
            let sv = subject.feature_vector(si);
            let av = archetype.feature_vector(ai);
            let (part, _, _) = score_pair(&sv, &av, spec, policy)?;
            let universe = part.universe_len();
            if let Some(min) = min_universe {
                if universe < min {
                    return Ok(PairScore {
                        subject_idx: si,
                        archetype_idx: ai,
                        wsi_weighted: f64::NAN,
                        wsi_uniform: f64::NAN,
                        euclidean: euclidean_finite(&sv.values, &av.values),
                        universe,
                        degenerate: true,
                    });
                }
            }
            let weights = weights_for_partition(spec, &part);
            let (weighted, uniform, degenerate) = if universe == 0 {
                (f64::NAN, f64::NAN, true)
            } else {
                let w = weighted_similarity_index(&part, &weights).map_err(CliError::from)?;
                let u = weighted_similarity_index(&part, &vec![1.0; universe])
                    .map_err(CliError::from)?;
                (w, u, false)
            };
            Ok(PairScore {
                subject_idx: si,
                archetype_idx: ai,
                wsi_weighted: weighted,
                wsi_uniform: uniform,
                euclidean: euclidean_finite(&sv.values, &av.values),
                universe,
                degenerate,
            })
        })
        .collect()
}

pub(crate) fn policy_name(policy: AbsentPolicy) -> &'static str {
    match policy {
        AbsentPolicy::CountAsCommon => "count_as_common",
        AbsentPolicy::DropFromUniverse => "drop_from_universe",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_sampling_unique_and_deterministic() {
        let a = sample_pairs(20, 30, 100, false, 7).unwrap();
        let b = sample_pairs(20, 30, 100, false, 7).unwrap();
        assert_eq!(a, b);
        let set: HashSet<_> = a.iter().collect();
        assert_eq!(set.len(), 100);
        assert!(sample_pairs(3, 3, 10, false, 1).is_err());
        // diagonal exclusion
        let d = sample_pairs(5, 5, 20, true, 3).unwrap();
        assert!(d.iter().all(|&(s, a)| s != a));
    }

    #[test]
    fn euclidean_skips_nan_coordinates() {
        let a = [1.0, f64::NAN, 3.0];
        let b = [1.0, 5.0, 7.0];
        assert_eq!(euclidean_finite(&a, &b), 4.0);
    }

    #[test]
    fn derive_percent_tolerance_from_table() {
        let mut t = FeatureTable::new(vec!["x".into(), "y".into()]);
        t.push("a".into(), vec![10.0, 0.0], &[]);
        t.push("b".into(), vec![10.0, 0.0], &[]);
        let spec = derive_tolerance(&ToleranceSource::Percent { pct: 20.0 }, &t).unwrap();
        assert_eq!(spec.lower[0], 8.0);
        assert_eq!(spec.upper[0], 12.0);
        // zero-valued feature falls back to the epsilon band
        assert!(spec.lower[1] < 0.0 && spec.upper[1] > 0.0);
    }
}
