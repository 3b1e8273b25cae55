use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use ses_core::metrics::MetricsReport;
use ses_core::trainer::TrainConfig;
use sha2::{Digest, Sha256};

use crate::Failure;

pub const BUILD_ID: &str = env!("SES_BUILD_ID");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn hash_files(paths: &[&Path]) -> Result<String, Failure> {
    let mut hasher = Sha256::new();
    for p in paths {
        hasher.update(fs::read(p).map_err(|e| Failure::io(p, e))?);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

pub fn config_hash(cfg: &TrainConfig) -> String {
    sha256_hex(
        serde_json::to_string(cfg)
            .expect("config serializes")
            .as_bytes(),
    )
}

/// Creates `out` and records every file written into it.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(root).map_err(|e| Failure::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf, Failure> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Failure::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Failure::io(&path, e))?;
        self.written.push(name.to_owned());
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, Failure> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| Failure::runtime(e.to_string()))?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn mark(&mut self, name: &str) {
        self.written.push(name.to_owned());
    }

    pub fn finish(mut self, mut manifest: Manifest) -> Result<(), Failure> {
        self.written.sort();
        manifest.outputs = std::mem::take(&mut self.written);
        self.json("manifest.json", &manifest).map(|_| ())
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub build_id: &'static str,
    pub threads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<TrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_hash: Option<String>,
    pub timings: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, MetricsReport>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            build_id: BUILD_ID,
            threads: 1,
            seed: None,
            config: None,
            config_hash: None,
            dataset: None,
            dataset_hash: None,
            timings: BTreeMap::new(),
            metrics: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn with_config(mut self, cfg: &TrainConfig) -> Self {
        self.seed = Some(cfg.seed);
        self.config_hash = Some(config_hash(cfg));
        self.config = Some(cfg.clone());
        self
    }
}
