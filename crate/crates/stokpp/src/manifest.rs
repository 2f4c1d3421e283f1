//! Run manifests: written before any output, finalized at the end.
//!
//! Wall-clock times live here and nowhere else, so the other outputs of a
//! run are byte-identical across repetitions.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::io;

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// `sha256` of the canonical JSON config, git-blob style
    /// (`"blob <len>\0"` prefix).
    pub config_hash: String,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub status: Status,
    pub outputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Complete,
    Failed,
}

pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Hash of the compact JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    Ok(content_hash(&serde_json::to_vec(config)?))
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn new<T: Serialize>(command: &str, seed: u64, config: &T) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            config: serde_json::to_value(config)?,
            config_hash: config_hash(config)?,
            started_unix: now(),
            finished_unix: None,
            status: Status::Running,
            outputs: Vec::new(),
            error: None,
        })
    }

    /// Writes `dir/manifest.json` and returns its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(FILE_NAME);
        io::write_json(&path, self)?;
        Ok(path)
    }

    pub fn record(&mut self, output: impl Into<PathBuf>) {
        self.outputs.push(output.into());
    }

    pub fn complete(&mut self) {
        self.finished_unix = Some(now());
        self.status = Status::Complete;
    }

    pub fn fail(&mut self, message: impl Into<String>) {
        self.finished_unix = Some(now());
        self.status = Status::Failed;
        self.error = Some(message.into());
    }
}
