//! `manifest.json`: the single record describing a run directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use evocf::evaldata::store::{IDMAP_DIR, INTERACTIONS_FILE, NEGATIVES_FILE, SPLITS_FILE};
use evocf::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Interrupted,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub dir: String,
    /// SHA-256 over the prepared split files.
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    /// How per-purpose seeds are derived from the master seed.
    pub derivation: String,
    pub final_train: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub evolve_seconds: f64,
    pub generations_completed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub status: RunStatus,
    /// `key = value` snapshot that reproduces the run.
    pub config: String,
    pub dataset: DatasetRef,
    pub seeds: Seeds,
    pub artifacts: BTreeMap<String, Artifact>,
    pub timings: Timings,
}

impl RunManifest {
    pub fn read(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(Error::State(format!("{} has no {MANIFEST_FILE}", run_dir.display())));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(format!("{}:{}", path.display(), e.line()), e.to_string()))
    }

    pub fn write(&self, run_dir: &Path) -> Result<()> {
        let path = run_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(path, e))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Content hash of a prepared dataset directory. The summary file is left
/// out because it records the source path.
pub fn dataset_fingerprint(data_dir: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let idmap = Path::new(IDMAP_DIR);
    for name in [
        Path::new(INTERACTIONS_FILE).to_path_buf(),
        Path::new(SPLITS_FILE).to_path_buf(),
        Path::new(NEGATIVES_FILE).to_path_buf(),
        idmap.join("users.tsv"),
        idmap.join("items.tsv"),
    ] {
        let path = data_dir.join(&name);
        let bytes = fs::read(&path).map_err(|e| Error::io(path, e))?;
        hasher.update(name.to_string_lossy().as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex(&hasher.finalize()))
}
