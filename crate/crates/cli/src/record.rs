//! Run directories and their `report.json` records.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex(&Sha256::digest(data))
}

/// Hash of the file as a content-addressed blob (`blob <len>\0<bytes>`).
pub fn blob_hash(data: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", data.len()).as_bytes());
    h.update(data);
    hex(&h.finalize())
}

/// Canonical JSON of the effective config with keys sorted. The output
/// directory is left out, so the same experiment hashes the same wherever it
/// is written.
pub fn canonical_config(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let cfg = ExperimentConfig { out: None, ..cfg.clone() };
    let value: Value = serde_json::to_value(&cfg)?;
    Ok(serde_json::to_string_pretty(&value)?)
}

fn unix_seconds() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub kind: String,
    /// SHA-256 of the canonical effective config.
    pub config_hash: String,
    /// Blob hash of the config file exactly as given.
    pub input_hash: String,
    pub started_at: f64,
    pub finished_at: f64,
    pub payload: Value,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
}

/// A run directory being filled.
pub struct RunDir {
    pub path: PathBuf,
    kind: String,
    config_hash: String,
    input_hash: String,
    started_at: f64,
    artifacts: Vec<String>,
}

impl RunDir {
    /// Creates `<out>/<kind>-<hash prefix>` and writes `config.json`.
    pub fn create(out: &Path, cfg: &ExperimentConfig, raw_config: &[u8]) -> Result<Self, CliError> {
        let kind = cfg.kind.map(|k| k.name()).unwrap_or("run").to_string();
        let canonical = canonical_config(cfg)?;
        let config_hash = sha256_hex(canonical.as_bytes());
        let path = out.join(format!("{kind}-{}", &config_hash[..12]));
        std::fs::create_dir_all(&path)?;
        let mut dir = Self {
            path,
            kind,
            config_hash,
            input_hash: blob_hash(raw_config),
            started_at: unix_seconds(),
            artifacts: Vec::new(),
        };
        dir.write("config.json", canonical.as_bytes())?;
        Ok(dir)
    }

    pub fn write(&mut self, name: &str, data: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.path.join(name);
        std::fs::write(&p, data)?;
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_string());
        }
        Ok(p)
    }

    /// Writes `report.json` and returns the record.
    pub fn finish(mut self, payload: Value) -> Result<RunRecord, CliError> {
        self.artifacts.push("report.json".into());
        let record = RunRecord {
            kind: self.kind,
            config_hash: self.config_hash,
            input_hash: self.input_hash,
            started_at: self.started_at,
            finished_at: unix_seconds(),
            payload,
            artifacts: self.artifacts,
        };
        std::fs::write(self.path.join("report.json"), serde_json::to_string_pretty(&record)?)?;
        Ok(record)
    }
}
