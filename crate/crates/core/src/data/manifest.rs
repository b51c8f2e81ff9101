use std::path::Path;

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command run: what configuration and seed produced which
/// files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    /// Paths relative to the run directory.
    pub outputs: Vec<String>,
    #[serde(default)]
    pub metrics: IndexMap<String, f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(command: &str, config_bytes: &[u8], seed: u64) -> Self {
        let now = Utc::now();
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: sha256_hex(config_bytes),
            seed,
            started_at: now,
            finished_at: now,
            outputs: Vec::new(),
            metrics: IndexMap::new(),
        }
    }

    pub fn write(&mut self, dir: &Path) -> Result<()> {
        self.finished_at = Utc::now();
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let p = dir.join(MANIFEST_FILE);
        if !p.exists() {
            return Err(Error::MissingArtifact(p));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?)
    }
}
