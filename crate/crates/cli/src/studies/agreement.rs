//! Reconstruction agreement: paired low/high-component reconstructions of
//! one ensemble, scored by the similarity index and by quantile-rescaled
//! Euclidean distance, with disagreement fractions at stipulated error
//! bands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use simtally::baselines::{agreement_analysis, quantile_match_rescale, AgreementReport};
use simtally::features::GlcmSpec;
use simtally::image::{ChannelSelect, GrayImage, RgbImage};
use simtally::pca2d::{self, Pca2dOptions};
use simtally::similarity::{AbsentPolicy, ToleranceSpec};

use crate::error::{CliError, CliResult};
use crate::manifest::ingest_ensemble;
use crate::report::{fmt_f64, sha256_hex, write_csv_rows, write_json, QuantileSummary, StudySummary};
use crate::studies::{
    derive_tolerance, extract_table, policy_name, score_sampled_pairs, ToleranceSource,
};

fn default_deltas() -> Vec<f64> {
    vec![0.1, 0.2]
}
fn default_m_low() -> usize {
    256
}
fn default_m_high() -> usize {
    1024
}
fn default_channel() -> ChannelSelect {
    ChannelSelect::Gray
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgreementConfig {
    /// Directory of grayscale (or channel-reducible RGB) PNGs.
    pub ensemble: PathBuf,
    #[serde(default = "default_channel")]
    pub channel: ChannelSelect,
    /// Low/high-dose component counts for the paired reconstructions.
    #[serde(default = "default_m_low")]
    pub m_low: usize,
    #[serde(default = "default_m_high")]
    pub m_high: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub tolerance: ToleranceSource,
    #[serde(default)]
    pub absent_policy: AbsentPolicy,
}

#[derive(Debug, Serialize)]
pub struct AgreementDetail {
    pub reports: BTreeMap<String, AgreementReport>,
}

pub struct AgreementOutcome {
    pub ids: Vec<String>,
    pub wsi: Vec<f64>,
    pub distances: Vec<f64>,
    pub rescaled: Vec<f64>,
    pub spec: ToleranceSpec,
    pub detail: AgreementDetail,
}

fn load_gray_ensemble(dir: &Path, channel: ChannelSelect) -> CliResult<Vec<(String, GrayImage)>> {
    let manifest = ingest_ensemble(dir)?;
    manifest
        .entries
        .iter()
        .map(|e| {
            let rgb = RgbImage::read_png(&e.file)?;
            Ok((e.id.clone(), rgb.channel(channel)))
        })
        .collect()
}

/// Scores similarity vs rescaled distance between paired reconstructions.
///
/// Precomputed paired feature tables may be supplied instead of an ensemble
/// directory via `run_on_tables`.
pub fn run_reconstruction_agreement(cfg: &AgreementConfig) -> CliResult<AgreementOutcome> {
    let images = load_gray_ensemble(&cfg.ensemble, cfg.channel)?;
    if images.len() < 4 {
        return Err(CliError::Data(
            "reconstruction agreement needs at least 4 images".into(),
        ));
    }
    let (rows, cols) = (images[0].1.rows(), images[0].1.cols());
    let limit = rows.min(cols);
    if cfg.m_low >= cfg.m_high {
        return Err(CliError::Usage(format!(
            "m_low {} must be below m_high {}",
            cfg.m_low, cfg.m_high
        )));
    }
    if cfg.m_high > limit {
        return Err(CliError::Usage(format!(
            "m_high {} exceeds min(R, C) = {limit} for this ensemble",
            cfg.m_high
        )));
    }
    let gray: Vec<GrayImage> = images.iter().map(|(_, g)| g.clone()).collect();
    let model = pca2d::fit(&gray, Pca2dOptions::default()).map_err(CliError::from)?;
    let mask_low = pca2d::dose_mask(&model, cfg.m_low, simtally::phantom::derive_seed(cfg.seed, 1))
        .map_err(CliError::from)?;
    let mask_high =
        pca2d::dose_mask(&model, cfg.m_high, simtally::phantom::derive_seed(cfg.seed, 2))
            .map_err(CliError::from)?;

    let mut low_imgs = Vec::with_capacity(gray.len());
    let mut high_imgs = Vec::with_capacity(gray.len());
    for (id, img) in &images {
        let loading = pca2d::project(&model, img).map_err(CliError::from)?;
        low_imgs.push((
            id.clone(),
            pca2d::reconstruct(&model, &loading, &mask_low).map_err(CliError::from)?,
        ));
        high_imgs.push((
            id.clone(),
            pca2d::reconstruct(&model, &loading, &mask_high).map_err(CliError::from)?,
        ));
    }
    let glcm = GlcmSpec::default();
    let low_table = extract_table(&low_imgs, &glcm)?;
    let high_table = extract_table(&high_imgs, &glcm)?;
    run_on_tables(cfg, low_table, high_table)
}

/// Core scoring on prepared paired feature tables (row i of each table is
/// the same underlying image).
pub fn run_on_tables(
    cfg: &AgreementConfig,
    low: crate::features_io::FeatureTable,
    high: crate::features_io::FeatureTable,
) -> CliResult<AgreementOutcome> {
    if low.len() != high.len() {
        return Err(CliError::Data(format!(
            "unpaired inputs: {} low-dose rows vs {} high-dose rows",
            low.len(),
            high.len()
        )));
    }
    if low.ids != high.ids {
        return Err(CliError::Data(
            "unpaired inputs: low/high image id sequences differ".into(),
        ));
    }
    // the higher-quality reconstruction ensemble plays the archetype role
    let spec = derive_tolerance(&cfg.tolerance, &high)?;
    let pairs: Vec<(usize, usize)> = (0..low.len()).map(|i| (i, i)).collect();
    let scores = score_sampled_pairs(&low, &high, &pairs, &spec, cfg.absent_policy, None)?;
    let wsi: Vec<f64> = scores.iter().map(|s| s.wsi_uniform).collect();
    let distances: Vec<f64> = scores.iter().map(|s| s.euclidean).collect();
    if wsi.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Numerical(
            "similarity index undefined for at least one pair".into(),
        ));
    }
    let rescaled = quantile_match_rescale(&distances, &wsi).map_err(CliError::from)?;
    let mut reports = BTreeMap::new();
    for &delta in &cfg.deltas {
        let rep = agreement_analysis(&wsi, &rescaled, delta).map_err(CliError::from)?;
        reports.insert(format!("delta_{delta}"), rep);
    }
    Ok(AgreementOutcome {
        ids: low.ids.clone(),
        wsi,
        distances,
        rescaled,
        spec,
        detail: AgreementDetail { reports },
    })
}

pub fn write_report(
    cfg: &AgreementConfig,
    outcome: &AgreementOutcome,
    out_dir: &Path,
) -> CliResult<()> {
    std::fs::create_dir_all(out_dir)?;
    let rows: Vec<Vec<String>> = (0..outcome.ids.len())
        .map(|i| {
            vec![
                outcome.ids[i].clone(),
                fmt_f64(outcome.wsi[i]),
                fmt_f64(outcome.distances[i]),
                fmt_f64(outcome.rescaled[i]),
                String::new(),
            ]
        })
        .collect();
    write_csv_rows(
        &out_dir.join("pairs.csv"),
        &["pair_id", "wsi", "distance", "rescaled_distance", "flags"],
        &rows,
    )?;
    let mut groups = BTreeMap::new();
    groups.insert("wsi".to_string(), QuantileSummary::from_values(&outcome.wsi));
    groups.insert(
        "rescaled_distance".to_string(),
        QuantileSummary::from_values(&outcome.rescaled),
    );
    let summary = StudySummary {
        workflow: "reconstruction_agreement".into(),
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
