//! Run manifests: what went in, what came out, and when.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub artifact_version: String,
    pub model_format_version: u32,
    pub timestamp: String,
    pub outputs: Vec<FileDigest>,
}

pub struct ManifestBuilder {
    command: String,
    config: BTreeMap<String, String>,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config: BTreeMap::new(),
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn config(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.config.insert(key.to_string(), value.to_string());
        self
    }

    pub fn config_kv(&mut self, text: &str) -> &mut Self {
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.config(k.trim(), v.trim());
            }
        }
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    /// Digests every file and writes `<command>.manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let digest = |ps: &[PathBuf]| ps.iter().map(|p| FileDigest::of(p)).collect::<Result<Vec<_>>>();
        let manifest = RunManifest {
            command: self.command.clone(),
            config: self.config.clone(),
            seed: self.seed,
            inputs: digest(&self.inputs)?,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            model_format_version: entlink::models::MODEL_VERSION,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            outputs: digest(&self.outputs)?,
        };
        let name = format!("{}.manifest.json", self.command.replace(' ', "-"));
        let path = dir.join(name);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}
