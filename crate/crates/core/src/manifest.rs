//! Run manifests written next to every command's primary output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{LarError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: Option<serde_json::Value>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub corpus_digest: Option<String>,
    pub vocab_fingerprint: Option<String>,
    pub started_at_unix: u64,
    pub wall_time_ms: u64,
}

/// Path of the manifest accompanying `output`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

pub struct ManifestBuilder {
    started: Instant,
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn start(command: &str) -> Self {
        let started_at_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        ManifestBuilder {
            started: Instant::now(),
            manifest: RunManifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                config: None,
                inputs: BTreeMap::new(),
                outputs: Vec::new(),
                corpus_digest: None,
                vocab_fingerprint: None,
                started_at_unix,
                wall_time_ms: 0,
            },
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> &mut Self {
        self.manifest.inputs.insert(role.to_string(), path.display().to_string());
        self
    }

    pub fn config(&mut self, config: impl Serialize) -> &mut Self {
        self.manifest.config = serde_json::to_value(config).ok();
        self
    }

    pub fn corpus_digest(&mut self, digest: impl Into<String>) -> &mut Self {
        self.manifest.corpus_digest = Some(digest.into());
        self
    }

    pub fn vocab_fingerprint(&mut self, fp: impl Into<String>) -> &mut Self {
        self.manifest.vocab_fingerprint = Some(fp.into());
        self
    }

    /// Finalizes timing and writes the manifest next to `primary`.
    pub fn write(&mut self, primary: &Path) -> Result<RunManifest> {
        self.manifest.outputs = vec![primary.display().to_string()];
        self.manifest.wall_time_ms = self.started.elapsed().as_millis() as u64;
        let path = manifest_path(primary);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| LarError::io(&path, e))?;
        Ok(self.manifest.clone())
    }
}
