//! Whole-feature ablation study: an unadulterated phantom archetype ensemble
//! against ensembles with the spiny structures removed, the background
//! texture scrambled, or both.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use simtally::features::{equal_probability_quantize, glcm, glcm_correlation, GlcmAngle};
use simtally::image::{GrayImage, RgbImage};
use simtally::imgproc::Mask;
use simtally::phantom::{
    ablate_spines, derive_seed, generate_cobalt, shuffle_background, CobaltConfig,
    CobaltRealization,
};
use simtally::similarity::{
    binarize, partition, weighted_similarity_index, AbsentPolicy, FeatureVector, ToleranceSpec,
};
use simtally::tolerance::ks_statistic;

use crate::error::{CliError, CliResult};
use crate::report::{
    fmt_f64, quantile, sha256_hex, write_csv_rows, write_json, QuantileSummary, StudySummary,
};
use crate::studies::policy_name;

pub const ENSEMBLE_NAMES: [&str; 3] = ["missing_texture", "missing_spines", "missing_both"];
const FEATURE_NAMES: [&str; 3] = ["background_texture", "spines", "other_features"];

fn default_n_images() -> usize {
    64
}
fn default_ks_quantiles() -> (f64, f64) {
    (0.05, 0.95)
}
fn default_ks_pairs() -> usize {
    200
}
fn default_ks_reps() -> usize {
    64
}
fn default_tolerance_pct() -> f64 {
    20.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationConfig {
    #[serde(default)]
    pub cobalt: CobaltConfig,
    #[serde(default = "default_n_images")]
    pub n_images: usize,
    #[serde(default)]
    pub seed: u64,
    /// Null-band quantiles for the KS-derived texture tolerance.
    #[serde(default = "default_ks_quantiles")]
    pub ks_quantiles: (f64, f64),
    /// Number of archetype half-splits estimating the KS null distribution.
    #[serde(default = "default_ks_pairs")]
    pub ks_pairs: usize,
    /// Number of subsample draws whose median forms the subject KS statistic.
    #[serde(default = "default_ks_reps")]
    pub ks_reps: usize,
    /// Percent band for the spine-energy and catch-all features.
    #[serde(default = "default_tolerance_pct")]
    pub tolerance_pct: f64,
    #[serde(default)]
    pub absent_policy: AbsentPolicy,
    /// Compare the archetype ensemble against itself as an extra report row.
    #[serde(default)]
    pub include_self_row: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            cobalt: CobaltConfig::default(),
            n_images: default_n_images(),
            seed: 0,
            ks_quantiles: default_ks_quantiles(),
            ks_pairs: default_ks_pairs(),
            ks_reps: default_ks_reps(),
            tolerance_pct: default_tolerance_pct(),
            absent_policy: AbsentPolicy::default(),
            include_self_row: false,
        }
    }
}

/// Per-image measured values for the three study features.
#[derive(Debug, Clone)]
struct Measured {
    texture: Vec<f64>,
    spine: Vec<f64>,
    other: Vec<f64>,
}

/// Labels: 0 background, 1 foreground, 2 cell.
fn label_masks(labels: &Array2<u8>) -> (Mask, Mask) {
    let background = labels.mapv(|v| (v == 0) as u8);
    let cell = labels.mapv(|v| (v == 2) as u8);
    (background, cell)
}

fn labels_of(r: &CobaltRealization) -> Array2<u8> {
    let mut labels = Array2::zeros(r.masks.background.dim());
    for (idx, v) in labels.indexed_iter_mut() {
        *v = if r.masks.cell[idx] == 1 {
            2
        } else if r.masks.foreground[idx] == 1 {
            1
        } else {
            0
        };
    }
    labels
}

/// Measures (background GLCM correlation, mean blue in cell, mean red in
/// foreground+cell) for one image.
pub fn measure_image(rgb: &RgbImage, labels: &Array2<u8>) -> CliResult<(f64, f64, f64)> {
    let (background, cell) = label_masks(labels);
    let red = GrayImage::new(rgb.red.clone()).map_err(CliError::from)?;
    let quant = equal_probability_quantize(&red, 16).map_err(CliError::from)?;
    let g = glcm(&quant.levels, &background, 16, 1, GlcmAngle::Deg0).map_err(CliError::from)?;
    let texture = if g.is_degenerate() {
        f64::NAN
    } else {
        glcm_correlation(&g).0
    };
    let mut blue_sum = 0.0;
    let mut cell_n = 0u64;
    let mut red_sum = 0.0;
    let mut fg_n = 0u64;
    for (idx, &lab) in labels.indexed_iter() {
        if lab == 2 {
            blue_sum += rgb.blue[idx] as f64;
            cell_n += 1;
        }
        if lab >= 1 {
            red_sum += rgb.red[idx] as f64;
            fg_n += 1;
        }
    }
    let spine = if cell_n > 0 { blue_sum / cell_n as f64 } else { f64::NAN };
    let other = if fg_n > 0 { red_sum / fg_n as f64 } else { f64::NAN };
    Ok((texture, spine, other))
}

fn measure_ensemble(images: &[(RgbImage, Array2<u8>)]) -> CliResult<Measured> {
    let trios: Vec<(f64, f64, f64)> = images
        .par_iter()
        .map(|(rgb, labels)| measure_image(rgb, labels))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Measured {
        texture: trios.iter().map(|t| t.0).collect(),
        spine: trios.iter().map(|t| t.1).collect(),
        other: trios.iter().map(|t| t.2).collect(),
    })
}

fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    if v.is_empty() {
        return f64::NAN;
    }
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Null band for the texture statistic: KS between random disjoint
/// half-splits of the archetype per-image values.
fn ks_null_band(
    archetype: &[f64],
    quantiles: (f64, f64),
    n_pairs: usize,
    seed: u64,
) -> CliResult<(f64, f64)> {
    let n = archetype.len();
    let k = n / 2;
    if k < 2 {
        return Err(CliError::Data(format!(
            "need at least 4 archetype images for the KS band, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(n_pairs);
    let mut idx: Vec<usize> = (0..n).collect();
    for _ in 0..n_pairs {
        for i in (1..idx.len()).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        let a: Vec<f64> = idx[..k].iter().map(|&i| archetype[i]).collect();
        let b: Vec<f64> = idx[k..2 * k].iter().map(|&i| archetype[i]).collect();
        stats.push(ks_statistic(&a, &b).map_err(CliError::from)?);
    }
    stats.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((quantile(&stats, quantiles.0), quantile(&stats, quantiles.1)))
}

/// Subject-vs-archetype texture statistic: the median KS over repeated
/// equal-size subsample draws. When subject and archetype are the same
/// ensemble, each draw is one disjoint permutation split, reproducing the
/// null exactly.
fn median_subsample_ks(
    subject: &[f64],
    archetype: &[f64],
    same_ensemble: bool,
    reps: usize,
    seed: u64,
) -> CliResult<f64> {
    let k = subject.len().min(archetype.len()) / 2;
    if k < 2 {
        return Err(CliError::Data("ensembles too small for the KS statistic".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(reps);
    for _ in 0..reps {
        let (a, b) = if same_ensemble {
            let mut idx: Vec<usize> = (0..archetype.len()).collect();
            for i in (1..idx.len()).rev() {
                let j = rng.gen_range(0..=i);
                idx.swap(i, j);
            }
            let a: Vec<f64> = idx[..k].iter().map(|&i| archetype[i]).collect();
            let b: Vec<f64> = idx[k..2 * k].iter().map(|&i| archetype[i]).collect();
            (a, b)
        } else {
            let pick = |vals: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
                let mut idx: Vec<usize> = (0..vals.len()).collect();
                for i in (1..idx.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    idx.swap(i, j);
                }
                idx[..k].iter().map(|&i| vals[i]).collect()
            };
            (pick(subject, &mut rng), pick(archetype, &mut rng))
        };
        stats.push(ks_statistic(&a, &b).map_err(CliError::from)?);
    }
    Ok(median(&stats))
}

/// One report row.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleRow {
    pub ensemble: String,
    pub texture_stat: f64,
    pub spine_stat: f64,
    pub other_stat: f64,
    pub bits: [u8; 3],
    pub wsi: f64,
}

#[derive(Debug, Serialize)]
pub struct AblationDetail {
    pub texture_band: (f64, f64),
    pub spine_band: (f64, f64),
    pub other_band: (f64, f64),
    pub archetype_bits: [u8; 3],
    pub rows: Vec<EnsembleRow>,
}

pub struct AblationOutcome {
    pub rows: Vec<EnsembleRow>,
    pub per_image: Vec<(String, String, f64, f64, f64)>,
    pub detail: AblationDetail,
    pub spec: ToleranceSpec,
}

/// Runs the study in memory; `write_report` persists it.
pub fn run_ablation_study(cfg: &AblationConfig) -> CliResult<AblationOutcome> {
    if cfg.n_images < 4 {
        return Err(CliError::Usage("ablation study needs at least 4 images".into()));
    }
    // archetype and subject-source realizations
    let archetype: Vec<(RgbImage, Array2<u8>)> = (0..cfg.n_images)
        .into_par_iter()
        .map(|i| {
            let r = generate_cobalt(&cfg.cobalt.with_seed(derive_seed(cfg.seed, 100 + i as u64)))?;
            Ok((r.rgb.clone(), labels_of(&r)))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let sources: Vec<CobaltRealization> = (0..cfg.n_images)
        .into_par_iter()
        .map(|i| {
            generate_cobalt(&cfg.cobalt.with_seed(derive_seed(cfg.seed, 200 + i as u64)))
                .map_err(CliError::from)
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut ensembles: Vec<(String, Vec<(RgbImage, Array2<u8>)>)> = Vec::new();
    let shuffled: Vec<CobaltRealization> = sources
        .par_iter()
        .enumerate()
        .map(|(i, r)| shuffle_background(r, derive_seed(cfg.seed, 300 + i as u64)).0)
        .collect();
    ensembles.push((
        "missing_texture".into(),
        shuffled
            .iter()
            .map(|r| (r.rgb.clone(), labels_of(r)))
            .collect(),
    ));
    ensembles.push((
        "missing_spines".into(),
        sources
            .iter()
            .map(|r| {
                let a = ablate_spines(r);
                (a.rgb.clone(), labels_of(&a))
            })
            .collect(),
    ));
    ensembles.push((
        "missing_both".into(),
        shuffled
            .iter()
            .map(|r| {
                let a = ablate_spines(r);
                (a.rgb.clone(), labels_of(&a))
            })
            .collect(),
    ));

    let arch_measured = measure_ensemble(&archetype)?;

    // tolerance bands
    let texture_band = ks_null_band(
        &arch_measured.texture,
        cfg.ks_quantiles,
        cfg.ks_pairs,
        derive_seed(cfg.seed, 1),
    )?;
    let spine_center = median(&arch_measured.spine);
    let other_center = median(&arch_measured.other);
    let band = |v: f64| -> (f64, f64) {
        let half = v.abs() * cfg.tolerance_pct / 100.0;
        (v - half, v + half)
    };
    let spine_band = band(spine_center);
    let other_band = band(other_center);
    let spec = ToleranceSpec::with_unit_weights(
        vec![texture_band.0, spine_band.0, other_band.0],
        vec![texture_band.1, spine_band.1, other_band.1],
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    )
    .map_err(CliError::from)?;

    // archetype ensemble-level feature vector (its own KS statistic is a
    // permutation split, the medians are the band centers)
    let arch_vector = FeatureVector::new(
        vec![
            median_subsample_ks(
                &arch_measured.texture,
                &arch_measured.texture,
                true,
                cfg.ks_reps,
                derive_seed(cfg.seed, 2),
            )?,
            spine_center,
            other_center,
        ],
        spec.names.clone(),
    )
    .map_err(CliError::from)?;
    let arch_bits = binarize(&arch_vector, &spec).map_err(CliError::from)?;

    let mut rows = Vec::new();
    let mut per_image = Vec::new();
    let mut record_values = |name: &str, m: &Measured| {
        for i in 0..m.texture.len() {
            per_image.push((
                name.to_string(),
                format!("img_{i:04}"),
                m.texture[i],
                m.spine[i],
                m.other[i],
            ));
        }
    };
    record_values("archetype", &arch_measured);

    let mut evaluate = |name: &str,
                        measured: &Measured,
                        same_as_archetype: bool,
                        tag: u64|
     -> CliResult<EnsembleRow> {
        let texture_stat = median_subsample_ks(
            &measured.texture,
            &arch_measured.texture,
            same_as_archetype,
            cfg.ks_reps,
            derive_seed(cfg.seed, 400 + tag),
        )?;
        let spine_stat = median(&measured.spine);
        let other_stat = median(&measured.other);
        let subject_vector = FeatureVector::new(
            vec![texture_stat, spine_stat, other_stat],
            spec.names.clone(),
        )
        .map_err(CliError::from)?;
        let s_bits = binarize(&subject_vector, &spec).map_err(CliError::from)?;
        let part = partition(&s_bits, &arch_bits, cfg.absent_policy).map_err(CliError::from)?;
        let wsi = weighted_similarity_index(&part, &vec![1.0; part.universe_len()])
            .map_err(CliError::from)?;
        Ok(EnsembleRow {
            ensemble: name.to_string(),
            texture_stat,
            spine_stat,
            other_stat,
            bits: [s_bits.bits[0], s_bits.bits[1], s_bits.bits[2]],
            wsi,
        })
    };

    if cfg.include_self_row {
        rows.push(evaluate("archetype_self", &arch_measured, true, 0)?);
    }
    for (idx, (name, images)) in ensembles.iter().enumerate() {
        let measured = measure_ensemble(images)?;
        rows.push(evaluate(name, &measured, false, 1 + idx as u64)?);
        record_values(name, &measured);
    }

    let detail = AblationDetail {
        texture_band,
        spine_band,
        other_band,
        archetype_bits: [arch_bits.bits[0], arch_bits.bits[1], arch_bits.bits[2]],
        rows: rows.clone(),
    };
    Ok(AblationOutcome {
        rows,
        per_image,
        detail,
        spec,
    })
}

/// Writes report.csv, values.csv, and summary.json into `out_dir`.
pub fn write_report(cfg: &AblationConfig, outcome: &AblationOutcome, out_dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out_dir)?;
    let rows: Vec<Vec<String>> = outcome
        .rows
        .iter()
        .map(|r| {
            vec![
                r.ensemble.clone(),
                fmt_f64(r.texture_stat),
                fmt_f64(r.spine_stat),
                fmt_f64(r.other_stat),
                r.bits[0].to_string(),
                r.bits[1].to_string(),
                r.bits[2].to_string(),
                fmt_f64(r.wsi),
            ]
        })
        .collect();
    write_csv_rows(
        &out_dir.join("report.csv"),
        &[
            "ensemble",
            "texture_stat",
            "spine_stat",
            "other_stat",
            "bit_background_texture",
            "bit_spines",
            "bit_other_features",
            "wsi",
        ],
        &rows,
    )?;
    let value_rows: Vec<Vec<String>> = outcome
        .per_image
        .iter()
        .map(|(e, id, t, s, o)| {
            vec![e.clone(), id.clone(), fmt_f64(*t), fmt_f64(*s), fmt_f64(*o)]
        })
        .collect();
    write_csv_rows(
        &out_dir.join("values.csv"),
        &["ensemble", "image_id", "background_texture", "spines", "other_features"],
        &value_rows,
    )?;

    let mut groups = BTreeMap::new();
    let mut by_ensemble: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (e, _, t, _, _) in &outcome.per_image {
        by_ensemble.entry(format!("{e}.background_texture")).or_default().push(*t);
    }
    for (e, _, _, s, _) in &outcome.per_image {
        by_ensemble.entry(format!("{e}.spines")).or_default().push(*s);
    }
    for (name, values) in by_ensemble {
        groups.insert(name, QuantileSummary::from_values(&values));
    }
    let summary = StudySummary {
        workflow: "ablation".into(),
        config: cfg.clone(),
        seed: cfg.seed,
        absent_policy: policy_name(cfg.absent_policy).into(),
        tolerance_spec_sha256: sha256_hex(outcome.spec.to_json().as_bytes()),
        groups,
        detail: &outcome.detail,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(())
}
