//! Report emission: CSV tables plus a JSON summary with the resolved config,
//! seeds, and distribution quantiles, sufficient to reproduce a run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

/// Distribution summary at the standard report quantiles.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct QuantileSummary {
    pub n: usize,
    pub q025: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q975: f64,
}

pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n as f64 - 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] * (1.0 - t) + sorted[hi] * t
}

impl QuantileSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.is_empty() {
            return Self {
                n: 0,
                q025: f64::NAN,
                q25: f64::NAN,
                q50: f64::NAN,
                q75: f64::NAN,
                q975: f64::NAN,
            };
        }
        Self {
            n: sorted.len(),
            q025: quantile(&sorted, 0.025),
            q25: quantile(&sorted, 0.25),
            q50: quantile(&sorted, 0.5),
            q75: quantile(&sorted, 0.75),
            q975: quantile(&sorted, 0.975),
        }
    }
}

/// JSON summary shared by all workflows; `detail` carries the
/// workflow-specific payload.
#[derive(Debug, Serialize)]
pub struct StudySummary<C: Serialize, D: Serialize> {
    pub workflow: String,
    pub config: C,
    pub seed: u64,
    pub absent_policy: String,
    /// SHA-256 of the serialized tolerance spec used by the run (empty when
    /// the workflow derives none).
    pub tolerance_spec_sha256: String,
    pub groups: BTreeMap<String, QuantileSummary>,
    pub detail: D,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text.as_bytes())?;
    Ok(())
}

/// Writes rows of display-ready cells as CSV.
pub fn write_csv_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest round-trip float formatting (stable across runs).
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}
