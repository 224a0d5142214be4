//! Systematic feature perturbation study: sweeps channel perturbation
//! levels, reporting paired/unpaired Gaussian KLD on the interpretable
//! feature clouds per channel plus the combined three-feature WSI.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use simtally::baselines::{fit_gaussian, kld_gaussian, EpsilonPolicy, PointCloud};
use simtally::features::GlcmSpec;
use simtally::image::{ChannelSelect, GrayImage, RgbImage};
use simtally::imgproc::connected_components;
use simtally::phantom::{
    derive_seed, detect_blue_cell_centers, generate_wonost, perturb_blue, perturb_green,
    perturb_red, WonostConfig,
};
use simtally::similarity::{
    binarize, partition, weighted_similarity_index, AbsentPolicy, FeatureVector, ToleranceSpec,
};

use crate::error::{CliError, CliResult};
use crate::features_io::FeatureTable;
use crate::report::{fmt_f64, sha256_hex, write_csv_rows, write_json, QuantileSummary, StudySummary};
use crate::studies::{extract_table, policy_name};

fn default_levels() -> Vec<f64> {
    vec![2.0, 4.0, 8.0, 12.0, 16.0, 24.0, 32.0]
}
fn default_n_per_level() -> usize {
    128
}
fn default_red_pct() -> f64 {
    10.0
}
fn default_green_pct() -> f64 {
    5.0
}
fn default_blue_pct() -> f64 {
    20.0
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationConfig {
    #[serde(default)]
    pub wonost: WonostConfig,
    #[serde(default = "default_n_per_level")]
    pub n_per_level: usize,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Acceptability thresholds: red median, green seed count, blue cell
    /// count, as percent bands around the archetype values.
    #[serde(default = "default_red_pct")]
    pub red_pct: f64,
    #[serde(default = "default_green_pct")]
    pub green_pct: f64,
    #[serde(default = "default_blue_pct")]
    pub blue_pct: f64,
    /// Also compute the per-channel paired/unpaired KLD columns.
    #[serde(default = "default_true")]
    pub compute_kld: bool,
    #[serde(default)]
    pub absent_policy: AbsentPolicy,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            wonost: WonostConfig::default(),
            n_per_level: default_n_per_level(),
            levels: default_levels(),
            seed: 0,
            red_pct: default_red_pct(),
            green_pct: default_green_pct(),
            blue_pct: default_blue_pct(),
            compute_kld: default_true(),
            absent_policy: AbsentPolicy::default(),
        }
    }
}

const CHANNELS: [&str; 3] = ["red", "green", "blue"];
const WSI_FEATURES: [&str; 3] = ["red_median", "green_seed_count", "blue_cell_count"];

/// Per-image channel statistics backing the three WSI features.
pub fn measure_channels(img: &RgbImage) -> (f64, f64, f64) {
    let mut red: Vec<u8> = img.red.iter().copied().collect();
    red.sort_unstable();
    let red_median = red[red.len() / 2] as f64;
    let green_support = img.green.mapv(|v| (v > 0) as u8);
    let green_count = connected_components(&green_support).1 as f64;
    let blue_count = detect_blue_cell_centers(img).len() as f64;
    (red_median, green_count, blue_count)
}

fn ensemble_stats(images: &[RgbImage]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let trios: Vec<(f64, f64, f64)> = images.par_iter().map(measure_channels).collect();
    (
        trios.iter().map(|t| t.0).collect(),
        trios.iter().map(|t| t.1).collect(),
        trios.iter().map(|t| t.2).collect(),
    )
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

/// Applies all three perturbations at one level to one image. Removal seeds
/// are per-image and level-independent, so removal sets are nested across
/// levels.
fn perturb_combined(img: &RgbImage, pct: f64, green_seed: u64, blue_seed: u64) -> CliResult<RgbImage> {
    let red = perturb_red(img, pct).map_err(CliError::from)?;
    let (green, _) = perturb_green(&red, pct, green_seed).map_err(CliError::from)?;
    let (blue, _) = perturb_blue(&green, pct, blue_seed).map_err(CliError::from)?;
    Ok(blue)
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelRow {
    pub level: f64,
    pub paired_red: f64,
    pub paired_green: f64,
    pub paired_blue: f64,
    pub unpaired_red: f64,
    pub unpaired_green: f64,
    pub unpaired_blue: f64,
    pub wsi: f64,
    pub bits: [u8; 3],
}

#[derive(Debug, Serialize)]
pub struct PerturbationDetail {
    pub archetype_stats: [f64; 3],
    pub bands: Vec<(String, f64, f64)>,
    pub dropped_columns: BTreeMap<String, Vec<String>>,
    pub rows: Vec<LevelRow>,
}

pub struct PerturbationOutcome {
    pub rows: Vec<LevelRow>,
    pub detail: PerturbationDetail,
    pub spec: ToleranceSpec,
}

/// Columns unusable for Gaussian fitting anywhere in a channel sweep:
/// non-finite entries or (numerically) zero variance in any cloud.
fn bad_columns(tables: &[&FeatureTable]) -> Vec<usize> {
    let m = tables[0].names.len();
    (0..m)
        .filter(|&j| {
            tables.iter().any(|t| {
                let col = t.column(j);
                if col.iter().any(|v| !v.is_finite()) {
                    return true;
                }
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (col.len() as f64 - 1.0);
                var <= 1e-12 * (mean * mean + 1.0)
            })
        })
        .collect()
}

fn cloud_from(table: &FeatureTable, dropped: &[usize]) -> CliResult<PointCloud> {
    let keep: Vec<usize> = (0..table.names.len())
        .filter(|j| !dropped.contains(j))
        .collect();
    if keep.is_empty() {
        return Err(CliError::Numerical(
            "every feature column is degenerate; cannot fit a Gaussian".into(),
        ));
    }
    let n = table.len();
    let mut m = nalgebra::DMatrix::zeros(n, keep.len());
    for (col_dst, &col_src) in keep.iter().enumerate() {
        for i in 0..n {
            m[(i, col_dst)] = table.rows[i][col_src];
        }
    }
    let names: Vec<String> = keep.iter().map(|&j| table.names[j].clone()).collect();
    PointCloud::new(m, names).map_err(CliError::from)
}

fn kld_between(subject: &FeatureTable, archetype: &FeatureTable, dropped: &[usize]) -> CliResult<f64> {
    let n = subject.len().min(archetype.len());
    if n < 8 {
        return Err(CliError::Data(format!(
            "ensemble too small for a Gaussian fit: {n} images (need at least 8)"
        )));
    }
    let p = fit_gaussian(&cloud_from(subject, dropped)?, EpsilonPolicy::default())
        .map_err(CliError::from)?;
    let q = fit_gaussian(&cloud_from(archetype, dropped)?, EpsilonPolicy::default())
        .map_err(CliError::from)?;
    kld_gaussian(&p, &q).map_err(CliError::from)
}

pub fn run_perturbation_study(cfg: &PerturbationConfig) -> CliResult<PerturbationOutcome> {
    if cfg.n_per_level < 4 {
        return Err(CliError::Usage("perturbation study needs at least 4 images per level".into()));
    }
    let n = cfg.n_per_level;
    let base: Vec<RgbImage> = (0..n)
        .into_par_iter()
        .map(|i| {
            generate_wonost(&cfg.wonost.with_seed(derive_seed(cfg.seed, 10 + i as u64)))
                .map(|r| r.rgb)
                .map_err(CliError::from)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let unpaired: Vec<RgbImage> = if cfg.compute_kld {
        (0..n)
            .into_par_iter()
            .map(|i| {
                generate_wonost(&cfg.wonost.with_seed(derive_seed(cfg.seed, 20_000 + i as u64)))
                    .map(|r| r.rgb)
                    .map_err(CliError::from)
            })
            .collect::<CliResult<Vec<_>>>()?
    } else {
        Vec::new()
    };

    // archetype (paired, unperturbed) channel statistics and bands
    let (arch_red, arch_green, arch_blue) = ensemble_stats(&base);
    let arch_stats = [median(&arch_red), median(&arch_green), median(&arch_blue)];
    let pcts = [cfg.red_pct, cfg.green_pct, cfg.blue_pct];
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for (v, pct) in arch_stats.iter().zip(pcts) {
        let interval = simtally::tolerance::percent_tolerance(*v, pct, f64::EPSILON)
            .map_err(CliError::from)?;
        lower.push(interval.lower);
        upper.push(interval.upper);
    }
    let spec = ToleranceSpec::with_unit_weights(
        lower,
        upper,
        WSI_FEATURES.iter().map(|s| s.to_string()).collect(),
    )
    .map_err(CliError::from)?;
    let arch_vector =
        FeatureVector::new(arch_stats.to_vec(), spec.names.clone()).map_err(CliError::from)?;
    let arch_bits = binarize(&arch_vector, &spec).map_err(CliError::from)?;

    // feature tables per channel for the KLD columns
    let glcm_spec = GlcmSpec::default();
    let channel_of = |images: &[RgbImage], sel: ChannelSelect| -> Vec<(String, GrayImage)> {
        images
            .iter()
            .enumerate()
            .map(|(i, img)| (format!("img_{i:04}"), img.channel(sel)))
            .collect()
    };
    let selections = [ChannelSelect::Red, ChannelSelect::Green, ChannelSelect::Blue];
    let mut base_tables = Vec::new();
    let mut unpaired_tables = Vec::new();
    if cfg.compute_kld {
        for sel in selections {
            base_tables.push(extract_table(&channel_of(&base, sel), &glcm_spec)?);
            unpaired_tables.push(extract_table(&channel_of(&unpaired, sel), &glcm_spec)?);
        }
    }

    // per-channel perturbed tables per level
    let mut perturbed_tables: Vec<Vec<FeatureTable>> = Vec::new(); // [channel][level]
    if cfg.compute_kld {
        for (c, sel) in selections.iter().enumerate() {
            let mut per_level = Vec::new();
            for &pct in &cfg.levels {
                let imgs: Vec<RgbImage> = base
                    .par_iter()
                    .enumerate()
                    .map(|(i, img)| match c {
                        0 => perturb_red(img, pct).map_err(CliError::from),
                        1 => perturb_green(img, pct, derive_seed(cfg.seed, 30_000 + i as u64))
                            .map(|r| r.0)
                            .map_err(CliError::from),
                        _ => perturb_blue(img, pct, derive_seed(cfg.seed, 40_000 + i as u64))
                            .map(|r| r.0)
                            .map_err(CliError::from),
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                per_level.push(extract_table(&channel_of(&imgs, *sel), &glcm_spec)?);
            }
            perturbed_tables.push(per_level);
        }
    }

    // consistent column filter per channel sweep
    let mut dropped_columns = BTreeMap::new();
    let mut dropped_idx: Vec<Vec<usize>> = Vec::new();
    if cfg.compute_kld {
        for c in 0..3 {
            let mut involved: Vec<&FeatureTable> = vec![&base_tables[c], &unpaired_tables[c]];
            involved.extend(perturbed_tables[c].iter());
            let dropped = bad_columns(&involved);
            dropped_columns.insert(
                CHANNELS[c].to_string(),
                dropped.iter().map(|&j| base_tables[c].names[j].clone()).collect(),
            );
            dropped_idx.push(dropped);
        }
    }

    // level rows: a pct = 0 row first, then the sweep
    let mut rows = Vec::new();
    let mut levels = vec![0.0];
    levels.extend(cfg.levels.iter().copied());
    for (li, &pct) in levels.iter().enumerate() {
        let combined: Vec<RgbImage> = base
            .par_iter()
            .enumerate()
            .map(|(i, img)| {
                perturb_combined(
                    img,
                    pct,
                    derive_seed(cfg.seed, 30_000 + i as u64),
                    derive_seed(cfg.seed, 40_000 + i as u64),
                )
            })
            .collect::<CliResult<Vec<_>>>()?;
        let (r, g, b) = ensemble_stats(&combined);
        let subject_stats = [median(&r), median(&g), median(&b)];
        let subject_vector =
            FeatureVector::new(subject_stats.to_vec(), spec.names.clone()).map_err(CliError::from)?;
        let s_bits = binarize(&subject_vector, &spec).map_err(CliError::from)?;
        let part = partition(&s_bits, &arch_bits, cfg.absent_policy).map_err(CliError::from)?;
        let wsi = weighted_similarity_index(&part, &vec![1.0; part.universe_len()])
            .map_err(CliError::from)?;

        let mut paired = [f64::NAN; 3];
        let mut unpaired_kld = [f64::NAN; 3];
        if cfg.compute_kld {
            for c in 0..3 {
                let table = if li == 0 {
                    &base_tables[c]
                } else {
                    &perturbed_tables[c][li - 1]
                };
                paired[c] = kld_between(table, &base_tables[c], &dropped_idx[c])?;
                unpaired_kld[c] = kld_between(table, &unpaired_tables[c], &dropped_idx[c])?;
            }
        }
        rows.push(LevelRow {
            level: pct,
            paired_red: paired[0],
            paired_green: paired[1],
            paired_blue: paired[2],
            unpaired_red: unpaired_kld[0],
            unpaired_green: unpaired_kld[1],
            unpaired_blue: unpaired_kld[2],
            wsi,
            bits: [s_bits.bits[0], s_bits.bits[1], s_bits.bits[2]],
        });
    }

    let bands: Vec<(String, f64, f64)> = (0..3)
        .map(|i| (WSI_FEATURES[i].to_string(), spec.lower[i], spec.upper[i]))
        .collect();
    let detail = PerturbationDetail {
        archetype_stats: arch_stats,
        bands,
        dropped_columns,
        rows: rows.clone(),
    };
    Ok(PerturbationOutcome {
        rows,
        detail,
        spec,
    })
}

pub fn write_report(
    cfg: &PerturbationConfig,
    outcome: &PerturbationOutcome,
    out_dir: &Path,
) -> CliResult<()> {
    std::fs::create_dir_all(out_dir)?;
    let rows: Vec<Vec<String>> = outcome
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.level),
                fmt_f64(r.paired_red),
                fmt_f64(r.paired_green),
                fmt_f64(r.paired_blue),
                fmt_f64(r.unpaired_red),
                fmt_f64(r.unpaired_green),
                fmt_f64(r.unpaired_blue),
                fmt_f64(r.wsi),
                r.bits[0].to_string(),
                r.bits[1].to_string(),
                r.bits[2].to_string(),
            ]
        })
        .collect();
    write_csv_rows(
        &out_dir.join("report.csv"),
        &[
            "level",
            "paired_red",
            "paired_green",
            "paired_blue",
            "unpaired_red",
            "unpaired_green",
            "unpaired_blue",
            "wsi",
            "bit_red_median",
            "bit_green_seed_count",
            "bit_blue_cell_count",
        ],
        &rows,
    )?;
    let mut groups = BTreeMap::new();
    groups.insert(
        "wsi_over_levels".into(),
        QuantileSummary::from_values(&outcome.rows.iter().map(|r| r.wsi).collect::<Vec<_>>()),
    );
    let summary = StudySummary {
        workflow: "perturbation".into(),
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
