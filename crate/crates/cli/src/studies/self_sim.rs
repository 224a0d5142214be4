//! Ensemble self-similarity: random intra-ensemble pairs compared against
//! the archetype's own self-similarity band. Medians above the band indicate
//! memorization-like repetition; medians below it indicate that the expected
//! kind of images is not being produced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use simtally::features::GlcmSpec;
use simtally::image::ChannelSelect;
use simtally::similarity::{AbsentPolicy, ToleranceSpec};

use crate::error::{CliError, CliResult};
use crate::report::{fmt_f64, quantile, sha256_hex, write_csv_rows, write_json, QuantileSummary, StudySummary};
use crate::studies::{
    derive_tolerance, load_feature_table, policy_name, sample_pairs, score_sampled_pairs,
    PairScore, ToleranceSource,
};

fn default_pair_count() -> usize {
    2048
}
fn default_channel() -> ChannelSelect {
    ChannelSelect::Gray
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfConfig {
    pub archetype: PathBuf,
    pub subjects: BTreeMap<String, PathBuf>,
    #[serde(default = "default_channel")]
    pub channel: ChannelSelect,
    #[serde(default = "default_pair_count")]
    pub pair_count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerance: ToleranceSource,
    #[serde(default)]
    pub absent_policy: AbsentPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BandFlag {
    None,
    AboveBand,
    BelowBand,
}

#[derive(Debug, Serialize)]
pub struct SelfDetail {
    /// Archetype self-similarity outlier band (2.5% and 97.5% quantiles).
    pub band: (f64, f64),
    pub medians: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, BandFlag>,
}

pub struct SelfOutcome {
    pub per_ensemble: BTreeMap<String, Vec<PairScore>>,
    pub spec: ToleranceSpec,
    pub detail: SelfDetail,
}

fn intra_scores(
    table: &crate::features_io::FeatureTable,
    spec: &ToleranceSpec,
    policy: AbsentPolicy,
    pair_count: usize,
    seed: u64,
) -> CliResult<Vec<PairScore>> {
    let max_pairs = table.len() * (table.len() - 1);
    let pairs = sample_pairs(table.len(), table.len(), pair_count.min(max_pairs), true, seed)?;
    score_sampled_pairs(table, table, &pairs, spec, policy, None)
}

pub fn run_self_similarity(cfg: &SelfConfig) -> CliResult<SelfOutcome> {
    let glcm = GlcmSpec::default();
    let archetype = load_feature_table(&cfg.archetype, cfg.channel, &glcm)?;
    if archetype.len() < 3 {
        return Err(CliError::Data(
            "archetype ensemble too small for self-similarity banding".into(),
        ));
    }
    let spec = derive_tolerance(&cfg.tolerance, &archetype)?;

    let arch_scores = intra_scores(
        &archetype,
        &spec,
        cfg.absent_policy,
        cfg.pair_count,
        simtally::phantom::derive_seed(cfg.seed, 0),
    )?;
    let mut arch_wsi: Vec<f64> = arch_scores
        .iter()
        .map(|s| s.wsi_uniform)
        .filter(|v| v.is_finite())
        .collect();
    arch_wsi.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    if arch_wsi.is_empty() {
        return Err(CliError::Numerical(
            "archetype self-similarity produced no finite index values".into(),
        ));
    }
    let band = (quantile(&arch_wsi, 0.025), quantile(&arch_wsi, 0.975));

    let mut per_ensemble = BTreeMap::new();
    let mut medians = BTreeMap::new();
    let mut flags = BTreeMap::new();
    let arch_median = quantile(&arch_wsi, 0.5);
    medians.insert("archetype_self".to_string(), arch_median);
    flags.insert("archetype_self".to_string(), BandFlag::None);
    per_ensemble.insert("archetype_self".to_string(), arch_scores);

    for (i, (name, path)) in cfg.subjects.iter().enumerate() {
        let subject = load_feature_table(path, cfg.channel, &glcm)?;
        if subject.names != archetype.names {
            return Err(CliError::Data(format!(
                "feature universe of `{name}` does not match the archetype"
            )));
        }
        if subject.len() < 3 {
            return Err(CliError::Data(format!(
                "ensemble `{name}` too small for the requested pair count"
            )));
        }
        let scores = intra_scores(
            &subject,
            &spec,
            cfg.absent_policy,
            cfg.pair_count,
            simtally::phantom::derive_seed(cfg.seed, 1 + i as u64),
        )?;
        let mut wsi: Vec<f64> = scores
            .iter()
            .map(|s| s.wsi_uniform)
            .filter(|v| v.is_finite())
            .collect();
        wsi.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let median = quantile(&wsi, 0.5);
        let flag = if median > band.1 {
            BandFlag::AboveBand
        } else if median < band.0 {
            BandFlag::BelowBand
        } else {
            BandFlag::None
        };
        medians.insert(name.clone(), median);
        flags.insert(name.clone(), flag);
        per_ensemble.insert(name.clone(), scores);
    }
    Ok(SelfOutcome {
        per_ensemble,
        spec,
        detail: SelfDetail {
            band,
            medians,
            flags,
        },
    })
}

pub fn write_report(cfg: &SelfConfig, outcome: &SelfOutcome, out_dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut rows = Vec::new();
    for (name, scores) in &outcome.per_ensemble {
        for (i, s) in scores.iter().enumerate() {
            rows.push(vec![
                name.clone(),
                i.to_string(),
                s.subject_idx.to_string(),
                s.archetype_idx.to_string(),
                fmt_f64(s.wsi_uniform),
                fmt_f64(s.euclidean),
            ]);
        }
    }
    write_csv_rows(
        &out_dir.join("pairs.csv"),
        &["ensemble", "pair_id", "first_idx", "second_idx", "wsi", "euclidean"],
        &rows,
    )?;
    let mut groups = BTreeMap::new();
    for (name, scores) in &outcome.per_ensemble {
        let wsi: Vec<f64> = scores.iter().map(|s| s.wsi_uniform).collect();
        groups.insert(format!("{name}.wsi"), QuantileSummary::from_values(&wsi));
    }
    let summary = StudySummary {
        workflow: "self_similarity".into(),
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
