//! Subcommand implementations behind the clap surface.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use simtally::features::{GlcmSpec};
use simtally::image::{ChannelSelect, GrayImage, RgbImage};
use simtally::pca2d::{self, Pca2dModel, Pca2dOptions, SelectionMask};
use simtally::phantom::{
    ablate_spines, derive_seed, generate_cobalt, generate_wonost, perturb_blue, perturb_green,
    perturb_red, shuffle_background, CobaltConfig, CobaltRealization, WonostConfig,
};
use simtally::similarity::ToleranceSpec;
use simtally::tolerance::{
    importance_weights, kde_intersection_tolerance, ks_tolerance, percent_tolerance,
    random_forest_importance, ForestConfig,
};

use crate::error::{CliError, CliResult};
use crate::features_io::FeatureTable;
use crate::manifest::{ingest_ensemble, sha256_file, EnsembleManifest, ManifestEntry};
use crate::report::{fmt_f64, sha256_hex, write_csv_rows};
use crate::studies;

fn read_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
        }
    }
}

/// Ablations applied when generating a CoBaLT ensemble directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CobaltAblation {
    None,
    Spines,
    Background,
    Both,
}

fn labels_png(r: &CobaltRealization) -> GrayImage {
    let mut labels = ndarray::Array2::zeros(r.masks.background.dim());
    for (idx, v) in labels.indexed_iter_mut() {
        *v = if r.masks.cell[idx] == 1 {
            200
        } else if r.masks.foreground[idx] == 1 {
            100
        } else {
            0
        };
    }
    GrayImage { pixels: labels }
}

pub fn phantom_cobalt(
    config: Option<&Path>,
    count: usize,
    seed: u64,
    out: &Path,
    ablation: CobaltAblation,
) -> CliResult<()> {
    let cfg: CobaltConfig = read_config(config)?;
    cfg.validate().map_err(CliError::from)?;
    std::fs::create_dir_all(out)?;
    let cfg_hash = &sha256_hex(serde_json::to_string(&cfg)?.as_bytes())[..12];
    let entries: Vec<ManifestEntry> = (0..count)
        .into_par_iter()
        .map(|i| {
            let img_seed = derive_seed(seed, i as u64);
            let mut r = generate_cobalt(&cfg.with_seed(img_seed)).map_err(CliError::from)?;
            let ablations = match ablation {
                CobaltAblation::None => String::new(),
                CobaltAblation::Spines => {
                    r = ablate_spines(&r);
                    "spines".into()
                }
                CobaltAblation::Background => {
                    r = shuffle_background(&r, derive_seed(img_seed, 1)).0;
                    "background".into()
                }
                CobaltAblation::Both => {
                    r = ablate_spines(&shuffle_background(&r, derive_seed(img_seed, 1)).0);
                    "background;spines".into()
                }
            };
            let id = format!("cobalt_{i:05}");
            let file = out.join(format!("{id}.png"));
            r.rgb.write_png(&file).map_err(CliError::from)?;
            labels_png(&r)
                .write_png(&out.join(format!("{id}_labels.png")))
                .map_err(CliError::from)?;
            Ok(ManifestEntry {
                id,
                sha256: sha256_file(&file)?,
                file,
                provenance: format!("cobalt;cfg={cfg_hash};seed={img_seed};ablations={ablations}"),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    EnsembleManifest { entries }.write(out)?;
    Ok(())
}

pub fn phantom_wonost(config: Option<&Path>, count: usize, seed: u64, out: &Path) -> CliResult<()> {
    let cfg: WonostConfig = read_config(config)?;
    cfg.validate().map_err(CliError::from)?;
    std::fs::create_dir_all(out)?;
    let cfg_hash = &sha256_hex(serde_json::to_string(&cfg)?.as_bytes())[..12];
    let entries: Vec<ManifestEntry> = (0..count)
        .into_par_iter()
        .map(|i| {
            let img_seed = derive_seed(seed, i as u64);
            let r = generate_wonost(&cfg.with_seed(img_seed)).map_err(CliError::from)?;
            let id = format!("wonost_{i:05}");
            let file = out.join(format!("{id}.png"));
            r.rgb.write_png(&file).map_err(CliError::from)?;
            Ok(ManifestEntry {
                id,
                sha256: sha256_file(&file)?,
                file,
                provenance: format!("wonost;cfg={cfg_hash};seed={img_seed}"),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    EnsembleManifest { entries }.write(out)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PerturbChannel {
    Red,
    Green,
    Blue,
}

pub fn perturb(
    channel: PerturbChannel,
    pct: f64,
    seed: u64,
    input: &Path,
    out: &Path,
) -> CliResult<()> {
    let manifest = ingest_ensemble(input)?;
    std::fs::create_dir_all(out)?;
    let entries: Vec<ManifestEntry> = manifest
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let rgb = RgbImage::read_png(&e.file).map_err(CliError::from)?;
            let (perturbed, note) = match channel {
                PerturbChannel::Red => (perturb_red(&rgb, pct).map_err(CliError::from)?, String::new()),
                PerturbChannel::Green => {
                    let (img, rep) =
                        perturb_green(&rgb, pct, derive_seed(seed, i as u64)).map_err(CliError::from)?;
                    (img, format!(";removed={}/{}", rep.removed, rep.total))
                }
                PerturbChannel::Blue => {
                    let (img, rep) =
                        perturb_blue(&rgb, pct, derive_seed(seed, i as u64)).map_err(CliError::from)?;
                    (img, format!(";removed={}/{}", rep.removed, rep.total))
                }
            };
            let file = out.join(format!("{}.png", e.id));
            perturbed.write_png(&file).map_err(CliError::from)?;
            let channel_name = match channel {
                PerturbChannel::Red => "red",
                PerturbChannel::Green => "green",
                PerturbChannel::Blue => "blue",
            };
            let mut provenance = e.provenance.clone();
            if !provenance.is_empty() {
                provenance.push(';');
            }
            provenance.push_str(&format!("perturb={channel_name}:{pct}{note}"));
            Ok(ManifestEntry {
                id: e.id.clone(),
                sha256: sha256_file(&file)?,
                file,
                provenance,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    EnsembleManifest { entries }.write(out)?;
    Ok(())
}

pub fn features_extract(
    input: &Path,
    out: &Path,
    channel: ChannelSelect,
    distances: &[usize],
    levels: u8,
) -> CliResult<()> {
    let glcm = GlcmSpec::new(levels, distances.to_vec()).map_err(CliError::from)?;
    let table = studies::load_feature_table(input, channel, &glcm)?;
    table.write_csv(out)
}

/// Splits table rows into `folds` nearly equal per-feature sample groups.
fn fold_samples(table: &FeatureTable, feature: usize, folds: usize) -> Vec<Vec<f64>> {
    let col = table.column(feature);
    let fold_size = col.len() / folds;
    (0..folds)
        .map(|f| col[f * fold_size..(f + 1) * fold_size].to_vec())
        .collect()
}

pub fn tolerance_ks(
    features: &Path,
    folds: usize,
    pairs: usize,
    q_low: f64,
    q_high: f64,
    seed: u64,
    out: &Path,
) -> CliResult<()> {
    let table = FeatureTable::read_csv(features)?;
    if folds < 2 || table.len() / folds < 2 {
        return Err(CliError::Usage(format!(
            "need at least 2 folds of at least 2 rows; got {} rows over {folds} folds",
            table.len()
        )));
    }
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for j in 0..table.names.len() {
        let samples = fold_samples(&table, j, folds);
        if samples.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            // degenerate feature: accept only an exactly matching distribution
            lower.push(-1e-9);
            upper.push(1e-9);
            eprintln!(
                "warning: feature `{}` has non-finite values; its KS band is pinned near zero",
                table.names[j]
            );
            continue;
        }
        let band = ks_tolerance(&samples, q_low, q_high, pairs, derive_seed(seed, j as u64))
            .map_err(CliError::from)?;
        if band.flagged {
            lower.push(band.lower - 1e-9);
            upper.push(band.upper + 1e-9);
        } else {
            lower.push(band.lower);
            upper.push(band.upper);
        }
    }
    let spec = ToleranceSpec::with_unit_weights(lower, upper, table.names.clone())
        .map_err(CliError::from)?;
    std::fs::write(out, spec.to_json())?;
    Ok(())
}

pub fn tolerance_percent(features: &Path, pct: f64, out: &Path) -> CliResult<()> {
    let table = FeatureTable::read_csv(features)?;
    let spec = studies::derive_tolerance(&studies::ToleranceSource::Percent { pct }, &table)?;
    std::fs::write(out, spec.to_json())?;
    Ok(())
}

pub fn tolerance_kde(archetype: &Path, subject: &Path, out: &Path) -> CliResult<()> {
    let arch = FeatureTable::read_csv(archetype)?;
    let subj = FeatureTable::read_csv(subject)?;
    if arch.names != subj.names {
        return Err(CliError::Data(
            "archetype and subject feature tables disagree on feature names".into(),
        ));
    }
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut names = Vec::new();
    for j in 0..arch.names.len() {
        let a: Vec<f64> = arch.column(j).into_iter().filter(|v| v.is_finite()).collect();
        let s: Vec<f64> = subj.column(j).into_iter().filter(|v| v.is_finite()).collect();
        if a.len() < 20 || s.len() < 20 {
            eprintln!(
                "warning: feature `{}` skipped (fewer than 20 finite values)",
                arch.names[j]
            );
            continue;
        }
        match kde_intersection_tolerance(&a, &s) {
            Ok(band) => {
                if band.flagged {
                    eprintln!(
                        "warning: feature `{}` has disconnected dominance regions; using the mode-anchored interval",
                        arch.names[j]
                    );
                }
                lower.push(band.lower);
                upper.push(band.upper);
                names.push(arch.names[j].clone());
            }
            Err(e) => {
                eprintln!("warning: feature `{}` skipped ({e})", arch.names[j]);
            }
        }
    }
    if names.is_empty() {
        return Err(CliError::Numerical(
            "no feature produced a usable KDE-intersection interval".into(),
        ));
    }
    let spec = ToleranceSpec::with_unit_weights(lower, upper, names).map_err(CliError::from)?;
    std::fs::write(out, spec.to_json())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn weights_forest(
    archetype: &Path,
    subject: &Path,
    top_k: usize,
    trees: usize,
    seed: u64,
    out: &Path,
    spec_in: Option<&Path>,
    spec_out: Option<&Path>,
) -> CliResult<()> {
    let arch = FeatureTable::read_csv(archetype)?;
    let subj = FeatureTable::read_csv(subject)?;
    if arch.names != subj.names {
        return Err(CliError::Data(
            "archetype and subject feature tables disagree on feature names".into(),
        ));
    }
    // columns with any non-finite value cannot be used for training
    let usable: Vec<usize> = (0..arch.names.len())
        .filter(|&j| {
            arch.column(j).iter().all(|v| v.is_finite())
                && subj.column(j).iter().all(|v| v.is_finite())
        })
        .collect();
    if usable.is_empty() {
        return Err(CliError::Data("no finite feature columns to train on".into()));
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(arch.len() + subj.len());
    let mut labels: Vec<u8> = Vec::with_capacity(arch.len() + subj.len());
    for i in 0..arch.len() {
        rows.push(usable.iter().map(|&j| arch.rows[i][j]).collect());
        labels.push(0);
    }
    for i in 0..subj.len() {
        rows.push(usable.iter().map(|&j| subj.rows[i][j]).collect());
        labels.push(1);
    }
    let importances =
        random_forest_importance(&rows, &labels, ForestConfig { n_trees: trees, seed })
            .map_err(CliError::from)?;
    let usable_names: Vec<String> = usable.iter().map(|&j| arch.names[j].clone()).collect();
    let (weights, selected) = importance_weights(&importances, &usable_names, top_k)
        .map_err(CliError::from)?;

    // importance report: feature, importance, retained, weight
    let mut report_rows = Vec::new();
    for j in 0..arch.names.len() {
        let name = &arch.names[j];
        let (importance, retained, weight) = match usable_names.iter().position(|n| n == name) {
            None => (String::new(), "dropped".to_string(), String::new()),
            Some(u) => match selected.iter().position(|n| n == name) {
                Some(s) => (fmt_f64(importances[u]), "yes".into(), fmt_f64(weights[s])),
                None => (fmt_f64(importances[u]), "no".into(), String::new()),
            },
        };
        report_rows.push(vec![name.clone(), importance, retained, weight]);
    }
    write_csv_rows(out, &["feature", "importance", "retained", "weight"], &report_rows)?;

    if let Some(spec_out) = spec_out {
        let spec_in = spec_in.ok_or_else(|| {
            CliError::Usage("--spec-out requires --spec with the base tolerance spec".into())
        })?;
        let base = ToleranceSpec::from_json(&std::fs::read_to_string(spec_in)?)
            .map_err(CliError::from)?;
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        let mut w = Vec::new();
        let mut names = Vec::new();
        for (s, name) in selected.iter().enumerate() {
            let Some(b) = base.names.iter().position(|n| n == name) else {
                return Err(CliError::Data(format!(
                    "retained feature `{name}` missing from the base tolerance spec"
                )));
            };
            lower.push(base.lower[b]);
            upper.push(base.upper[b]);
            w.push(weights[s]);
            names.push(name.clone());
        }
        let weighted = ToleranceSpec::new(lower, upper, w, names).map_err(CliError::from)?;
        std::fs::write(spec_out, weighted.to_json())?;
    }
    Ok(())
}

fn load_gray_dir(input: &Path, channel: ChannelSelect) -> CliResult<Vec<(String, GrayImage)>> {
    let manifest = ingest_ensemble(input)?;
    manifest
        .entries
        .iter()
        .map(|e| {
            let rgb = RgbImage::read_png(&e.file).map_err(CliError::from)?;
            Ok((e.id.clone(), rgb.channel(channel)))
        })
        .collect()
}

pub fn pca2d_fit(input: &Path, out: &Path, channel: ChannelSelect) -> CliResult<()> {
    let images = load_gray_dir(input, channel)?;
    let gray: Vec<GrayImage> = images.into_iter().map(|(_, g)| g).collect();
    let model = pca2d::fit(&gray, Pca2dOptions::default()).map_err(CliError::from)?;
    model.save(out).map_err(CliError::from)?;
    Ok(())
}

pub fn pca2d_reconstruct(
    model_path: &Path,
    input: &Path,
    out: &Path,
    components: Option<usize>,
    channel: ChannelSelect,
) -> CliResult<()> {
    let model = Pca2dModel::load(model_path).map_err(CliError::from)?;
    let mask = match components {
        None => SelectionMask::full(model.rows, model.cols),
        Some(m) => {
            if m < 1 || m > model.rows.min(model.cols) {
                return Err(CliError::Usage(format!(
                    "--components {m} out of range [1, {}]",
                    model.rows.min(model.cols)
                )));
            }
            SelectionMask::top_k(model.rows, model.cols, m)
        }
    };
    reconstruct_dir(&model, input, out, &mask, channel)
}

pub fn pca2d_dose_sim(
    model_path: &Path,
    input: &Path,
    out: &Path,
    components: usize,
    seed: u64,
    channel: ChannelSelect,
) -> CliResult<()> {
    let model = Pca2dModel::load(model_path).map_err(CliError::from)?;
    let mask = pca2d::dose_mask(&model, components, seed).map_err(CliError::from)?;
    reconstruct_dir(&model, input, out, &mask, channel)
}

fn reconstruct_dir(
    model: &Pca2dModel,
    input: &Path,
    out: &Path,
    mask: &SelectionMask,
    channel: ChannelSelect,
) -> CliResult<()> {
    let images = load_gray_dir(input, channel)?;
    std::fs::create_dir_all(out)?;
    let entries: Vec<ManifestEntry> = images
        .par_iter()
        .map(|(id, img)| {
            let loading = pca2d::project(model, img).map_err(CliError::from)?;
            let recon = pca2d::reconstruct(model, &loading, mask).map_err(CliError::from)?;
            let file = out.join(format!("{id}.png"));
            recon.write_png(&file).map_err(CliError::from)?;
            let kept_rows: usize = mask.rows_kept.iter().map(|&v| v as usize).sum();
            let kept_cols: usize = mask.cols_kept.iter().map(|&v| v as usize).sum();
            Ok(ManifestEntry {
                id: id.clone(),
                sha256: sha256_file(&file)?,
                file,
                provenance: format!("pca2d;kept_rows={kept_rows};kept_cols={kept_cols}"),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    EnsembleManifest { entries }.write(out)?;
    Ok(())
}

pub fn plot_box(summary: &Path, filter: Option<&str>, out: &Path) -> CliResult<()> {
    let text = std::fs::read_to_string(summary)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let groups = value
        .get("groups")
        .and_then(|g| g.as_object())
        .ok_or_else(|| CliError::Data("summary JSON has no `groups` object".into()))?;
    let mut items = Vec::new();
    for (name, q) in groups {
        if let Some(f) = filter {
            if !name.contains(f) {
                continue;
            }
        }
        let get = |key: &str| q.get(key).and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
        items.push((
            name.clone(),
            [get("q025"), get("q25"), get("q50"), get("q75"), get("q975")],
        ));
    }
    if items.is_empty() {
        return Err(CliError::Data("no matching quantile groups to plot".into()));
    }
    crate::plot::write_svg(out, &crate::plot::boxplot_svg(&items))
}

pub fn plot_scatter(
    report: &Path,
    x_col: &str,
    y_col: &str,
    band: Option<f64>,
    out: &Path,
) -> CliResult<()> {
    let mut r = csv::Reader::from_path(report)?;
    let headers = r.headers()?.clone();
    let xi = headers
        .iter()
        .position(|h| h == x_col)
        .ok_or_else(|| CliError::Usage(format!("column `{x_col}` not in report")))?;
    let yi = headers
        .iter()
        .position(|h| h == y_col)
        .ok_or_else(|| CliError::Usage(format!("column `{y_col}` not in report")))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |s: &str| s.parse::<f64>().unwrap_or(f64::NAN);
        xs.push(parse(rec.get(xi).unwrap_or("")));
        ys.push(parse(rec.get(yi).unwrap_or("")));
    }
    crate::plot::write_svg(out, &crate::plot::scatter_svg(&xs, &ys, x_col, y_col, band))
}

/// Study dispatch shared by the five workflows: read config, apply CLI
/// overrides, run, persist reports.
pub struct StudyOverrides {
    pub seed: Option<u64>,
    pub out: PathBuf,
}

pub fn study_ablation(config: Option<&Path>, ov: &StudyOverrides) -> CliResult<()> {
    let mut cfg: studies::ablation::AblationConfig = read_config(config)?;
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    let outcome = studies::ablation::run_ablation_study(&cfg)?;
    studies::ablation::write_report(&cfg, &outcome, &ov.out)
}

pub fn study_perturbation(config: Option<&Path>, ov: &StudyOverrides) -> CliResult<()> {
    let mut cfg: studies::perturbation::PerturbationConfig = read_config(config)?;
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    let outcome = studies::perturbation::run_perturbation_study(&cfg)?;
    studies::perturbation::write_report(&cfg, &outcome, &ov.out)
}

pub fn study_cross(config: &Path, ov: &StudyOverrides) -> CliResult<()> {
    let mut cfg: studies::cross::CrossConfig = serde_json::from_str(
        &std::fs::read_to_string(config)?,
    )
    .map_err(|e| CliError::Usage(format!("{}: {e}", config.display())))?;
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    let outcome = studies::cross::run_cross_similarity(&cfg)?;
    studies::cross::write_report(&cfg, &outcome, &ov.out)
}

pub fn study_self(config: &Path, ov: &StudyOverrides) -> CliResult<()> {
    let mut cfg: studies::self_sim::SelfConfig =
        serde_json::from_str(&std::fs::read_to_string(config)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", config.display())))?;
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    let outcome = studies::self_sim::run_self_similarity(&cfg)?;
    studies::self_sim::write_report(&cfg, &outcome, &ov.out)
}

pub fn study_agreement(config: &Path, ov: &StudyOverrides) -> CliResult<()> {
    let mut cfg: studies::agreement::AgreementConfig =
        serde_json::from_str(&std::fs::read_to_string(config)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", config.display())))?;
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    let outcome = studies::agreement::run_reconstruction_agreement(&cfg)?;
    studies::agreement::write_report(&cfg, &outcome, &ov.out)
}

/// A BTreeMap helper for CLI name=path pairs.
pub fn parse_named_paths(pairs: &[String]) -> CliResult<BTreeMap<String, PathBuf>> {
    let mut map = BTreeMap::new();
    for p in pairs {
        let Some((name, path)) = p.split_once('=') else {
            return Err(CliError::Usage(format!(
                "expected name=path, got `{p}`"
            )));
        };
        map.insert(name.to_string(), PathBuf::from(path));
    }
    Ok(map)
}
