use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::data::{write_json, Domain};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct InputChecksum {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to re-run a command: pass the manifest back through
/// `--config` to reproduce the outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    /// Resolved settings, defaults included.
    pub config: Value,
    pub seed: u64,
    pub inputs: Vec<InputChecksum>,
    pub domain: Option<Domain>,
    pub version: String,
    pub threads: usize,
    pub wall_time_seconds: f64,
    pub status: String,
    pub outputs: Vec<String>,
}

pub fn checksum(path: &Path) -> CliResult<InputChecksum> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(InputChecksum {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Collects manifest fields while a command runs.
pub struct ManifestBuilder {
    started: Instant,
    pub manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: &impl Serialize, seed: u64) -> CliResult<Self> {
        Ok(Self {
            started: Instant::now(),
            manifest: RunManifest {
                command: command.to_string(),
                argv: std::env::args().collect(),
                config: serde_json::to_value(config).map_err(|e| CliError::Usage(e.to_string()))?,
                seed,
                inputs: Vec::new(),
                domain: None,
                version: env!("CARGO_PKG_VERSION").to_string(),
                threads: rayon::current_num_threads(),
                wall_time_seconds: 0.0,
                status: "ok".to_string(),
                outputs: Vec::new(),
            },
        })
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.manifest.inputs.push(checksum(path)?);
        Ok(())
    }

    pub fn output(&mut self, name: &str) {
        self.manifest.outputs.push(name.to_string());
    }

    pub fn write(mut self, dir: &Path, status: &str) -> CliResult<()> {
        self.manifest.status = status.to_string();
        self.manifest.wall_time_seconds = self.started.elapsed().as_secs_f64();
        write_json(&dir.join("manifest.json"), &self.manifest)
    }
}
