//! Ensemble cross-similarity: random archetype-subject pairs scored with the
//! weighted and uniform similarity indices alongside Euclidean feature
//! distance.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use simtally::features::GlcmSpec;
use simtally::image::ChannelSelect;
use simtally::similarity::{AbsentPolicy, ToleranceSpec};

use crate::error::{CliError, CliResult};
use crate::features_io::FeatureTable;
use crate::report::{fmt_f64, sha256_hex, write_csv_rows, write_json, QuantileSummary, StudySummary};
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
pub struct CrossConfig {
    /// Archetype ensemble: a directory of PNGs or a feature-table CSV.
    pub archetype: PathBuf,
    /// Named subject ensembles (directories or feature CSVs).
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
    /// Minimum retained universe per pair under the drop policy; smaller
    /// pairs are rejected and counted.
    #[serde(default)]
    pub min_universe: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct CrossDetail {
    pub rejected_pairs: BTreeMap<String, usize>,
}

pub struct CrossOutcome {
    pub per_ensemble: BTreeMap<String, Vec<PairScore>>,
    pub spec: ToleranceSpec,
    pub detail: CrossDetail,
}

pub fn run_cross_similarity(cfg: &CrossConfig) -> CliResult<CrossOutcome> {
    let glcm = GlcmSpec::default();
    let archetype = load_feature_table(&cfg.archetype, cfg.channel, &glcm)?;
    let spec = derive_tolerance(&cfg.tolerance, &archetype)?;
    if spec.names != archetype.names {
        return Err(CliError::Data(
            "tolerance spec features do not match the archetype feature table".into(),
        ));
    }

    let mut per_ensemble = BTreeMap::new();
    let mut rejected = BTreeMap::new();

    // archetype self-comparison baseline
    let self_pairs = sample_pairs(
        archetype.len(),
        archetype.len(),
        cfg.pair_count.min(archetype.len() * (archetype.len() - 1)),
        true,
        simtally::phantom::derive_seed(cfg.seed, 0),
    )?;
    let scores = score_sampled_pairs(
        &archetype,
        &archetype,
        &self_pairs,
        &spec,
        cfg.absent_policy,
        cfg.min_universe,
    )?;
    rejected.insert(
        "archetype_self".to_string(),
        scores.iter().filter(|s| s.degenerate).count(),
    );
    per_ensemble.insert("archetype_self".to_string(), scores);

    for (i, (name, path)) in cfg.subjects.iter().enumerate() {
        let subject = load_feature_table(path, cfg.channel, &glcm)?;
        if subject.names != archetype.names {
            return Err(CliError::Data(format!(
                "feature universe of `{name}` does not match the archetype"
            )));
        }
        let pairs = sample_pairs(
            subject.len(),
            archetype.len(),
            cfg.pair_count.min(subject.len() * archetype.len()),
            false,
            simtally::phantom::derive_seed(cfg.seed, 1 + i as u64),
        )?;
        let scores = score_sampled_pairs(
            &subject,
            &archetype,
            &pairs,
            &spec,
            cfg.absent_policy,
            cfg.min_universe,
        )?;
        rejected.insert(name.clone(), scores.iter().filter(|s| s.degenerate).count());
        per_ensemble.insert(name.clone(), scores);
    }
    Ok(CrossOutcome {
        per_ensemble,
        spec,
        detail: CrossDetail {
            rejected_pairs: rejected,
        },
    })
}

pub fn write_report(cfg: &CrossConfig, outcome: &CrossOutcome, out_dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut rows = Vec::new();
    for (name, scores) in &outcome.per_ensemble {
        for (i, s) in scores.iter().enumerate() {
            rows.push(vec![
                name.clone(),
                i.to_string(),
                s.subject_idx.to_string(),
                s.archetype_idx.to_string(),
                fmt_f64(s.wsi_weighted),
                fmt_f64(s.wsi_uniform),
                fmt_f64(s.euclidean),
                s.universe.to_string(),
                if s.degenerate { "rejected" } else { "" }.to_string(),
            ]);
        }
    }
    write_csv_rows(
        &out_dir.join("pairs.csv"),
        &[
            "ensemble",
            "pair_id",
            "subject_idx",
            "archetype_idx",
            "wsi",
            "wsi_uniform",
            "euclidean",
            "universe",
            "flags",
        ],
        &rows,
    )?;
    let mut groups = BTreeMap::new();
    for (name, scores) in &outcome.per_ensemble {
        let weighted: Vec<f64> = scores.iter().map(|s| s.wsi_weighted).collect();
        let uniform: Vec<f64> = scores.iter().map(|s| s.wsi_uniform).collect();
        let dist: Vec<f64> = scores.iter().map(|s| s.euclidean).collect();
        groups.insert(format!("{name}.wsi"), QuantileSummary::from_values(&weighted));
        groups.insert(format!("{name}.wsi_uniform"), QuantileSummary::from_values(&uniform));
        groups.insert(format!("{name}.euclidean"), QuantileSummary::from_values(&dist));
    }
    let summary = StudySummary {
        workflow: "cross_similarity".into(),
        config: cfg.clone(),
        seed: cfg.seed,
        absent_policy: policy_name(cfg.absent_policy).into(),
        tolerance_spec_sha256: sha256_hex(outcome.spec.to_json().as_bytes()),
        groups,
        detail: &outcome.detail,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    std::fs::write(out_dir.join("tolerance.json"), outcome.spec.to_json())?;
    Ok(())
}
