//! Run manifests: one JSON record per CLI invocation.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fs::write_json;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_ms: f64,
    pub version: String,
    /// Command-specific results such as final errors.
    pub summary: serde_json::Value,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Collects inputs and outputs while a command runs.
pub struct ManifestBuilder {
    command: String,
    args: Vec<String>,
    seed: u64,
    config: serde_json::Value,
    inputs: Vec<InputRecord>,
    outputs: Vec<PathBuf>,
    summary: serde_json::Value,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, args: Vec<String>, seed: u64) -> Self {
        Self {
            command: command.into(),
            args,
            seed,
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            summary: serde_json::Value::Null,
            started: Instant::now(),
        }
    }

    pub fn config<T: Serialize>(&mut self, config: &T) -> Result<()> {
        self.config = serde_json::to_value(config).map_err(|e| Error::Usage(e.to_string()))?;
        Ok(())
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputRecord {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn summary<T: Serialize>(&mut self, summary: &T) -> Result<()> {
        self.summary = serde_json::to_value(summary).map_err(|e| Error::Usage(e.to_string()))?;
        Ok(())
    }

    pub fn finish(self, out_dir: &Path) -> Result<RunManifest> {
        let manifest = RunManifest {
            command: self.command,
            args: self.args,
            config: self.config,
            seed: self.seed,
            inputs: self.inputs,
            outputs: self.outputs,
            wall_time_ms: self.started.elapsed().as_secs_f64() * 1e3,
            version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            summary: self.summary,
        };
        write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}
