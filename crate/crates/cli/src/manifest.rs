//! Ensemble manifests: deterministic image id ordering, per-file checksums,
//! and generator provenance.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub file: PathBuf,
    pub sha256: String,
    /// Generator config hash, ablations, perturbation levels.
    pub provenance: String,
}

#[derive(Debug, Clone, Default)]
pub struct EnsembleManifest {
    pub entries: Vec<ManifestEntry>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

impl EnsembleManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes `manifest.csv` next to the images.
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let mut w = csv::Writer::from_path(dir.join(MANIFEST_FILE))?;
        w.write_record(["id", "file", "sha256", "provenance"])?;
        for e in &self.entries {
            let rel = e
                .file
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default();
            w.write_record([&e.id, &rel, &e.sha256, &e.provenance])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(dir: &Path) -> CliResult<Self> {
        let mut r = csv::Reader::from_path(dir.join(MANIFEST_FILE))?;
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            entries.push(ManifestEntry {
                id: rec.get(0).unwrap_or_default().to_string(),
                file: dir.join(rec.get(1).unwrap_or_default()),
                sha256: rec.get(2).unwrap_or_default().to_string(),
                provenance: rec.get(3).unwrap_or_default().to_string(),
            });
        }
        Ok(Self { entries })
    }
}

/// Builds a verified manifest for a directory.
///
/// With a `manifest.csv` present, every listed file is checksum-verified; a
/// mismatch names the offending file. Without one, all `.png` files are
/// enumerated in lexicographic order and hashed fresh.
pub fn ingest_ensemble(dir: &Path) -> CliResult<EnsembleManifest> {
    if !dir.is_dir() {
        return Err(CliError::Data(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    if dir.join(MANIFEST_FILE).is_file() {
        let manifest = EnsembleManifest::read(dir)?;
        if manifest.is_empty() {
            return Err(CliError::Data(format!(
                "{}: manifest lists no images",
                dir.display()
            )));
        }
        let mut seen = BTreeSet::new();
        for e in &manifest.entries {
            if !seen.insert(e.id.clone()) {
                return Err(CliError::Data(format!("duplicate image id `{}`", e.id)));
            }
            if !e.file.is_file() {
                return Err(CliError::Data(format!(
                    "{}: listed file missing",
                    e.file.display()
                )));
            }
            let actual = sha256_file(&e.file)?;
            if actual != e.sha256 {
                return Err(CliError::Data(format!(
                    "checksum mismatch for {} (expected {}, found {actual})",
                    e.file.display(),
                    e.sha256
                )));
            }
        }
        return Ok(manifest);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension().map(|x| x == "png").unwrap_or(false)
                && !p
                    .file_stem()
                    .map(|s| s.to_string_lossy().ends_with("_labels"))
                    .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no PNG images found",
            dir.display()
        )));
    }
    let entries = files
        .into_iter()
        .map(|file| {
            let id = file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let sha256 = sha256_file(&file)?;
            Ok(ManifestEntry {
                id,
                file,
                sha256,
                provenance: String::new(),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(EnsembleManifest { entries })
}
