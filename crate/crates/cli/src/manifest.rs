//! Run manifests: enough to replay a command byte for byte.

use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use mkofl::rng::trial_seed;
use mkofl::trace_io::{write_json, SCHEMA_VERSION};
use mkofl::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::CliResult;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub algorithm: u64,
    pub data: u64,
    /// Derived per-trial algorithm seeds.
    pub trials: Vec<u64>,
}

impl Seeds {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            algorithm: cfg.seed,
            data: cfg.dataset.seed(),
            trials: (0..cfg.trials as u64).map(|t| trial_seed(cfg.seed, t)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub name: String,
    /// Config snapshot; `config_file` holds the same config as TOML.
    pub config: ExperimentConfig,
    pub config_file: Option<PathBuf>,
    pub seeds: Seeds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub runs: Vec<RunEntry>,
    pub outputs: Vec<PathBuf>,
    pub started_unix_secs: u64,
    pub duration_secs: f64,
    /// Command that reproduces the outputs from the snapshots.
    pub replay: String,
}

impl RunManifest {
    pub fn new(command: &str, args: &[String], runs: Vec<RunEntry>, outputs: Vec<PathBuf>, started: SystemTime, elapsed: Duration, replay: String) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: "mkofl".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args: args.to_vec(),
            runs,
            outputs,
            started_unix_secs: started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            duration_secs: elapsed.as_secs_f64(),
            replay,
        }
    }

    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        self.write_as(dir, MANIFEST_FILE)
    }

    pub fn write_as(&self, dir: &Path, name: &str) -> CliResult<PathBuf> {
        let path = dir.join(name);
        write_json(&path, self)?;
        Ok(path)
    }
}

/// Creates the output directory.
pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

/// Paths relative to the output directory, for the manifest.
pub fn relative(dir: &Path, paths: &[PathBuf]) -> Vec<PathBuf> {
    paths.iter().map(|p| p.strip_prefix(dir).map_or_else(|_| p.clone(), Path::to_path_buf)).collect()
}
