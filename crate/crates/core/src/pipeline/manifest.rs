use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::pipeline::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_sha256: Option<String>,
    /// Samples finished (for failed stages: the completed prefix).
    pub completed: usize,
    pub total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub finished_at: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    /// Input path to content hash.
    pub inputs: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
    /// Role to model id (and pooling for the embedder).
    pub backends: BTreeMap<String, String>,
    pub started_at: u64,
    pub updated_at: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn new(config: &RunConfig) -> Self {
        let now = unix_now();
        RunManifest {
            config: config.clone(),
            inputs: BTreeMap::new(),
            stages: BTreeMap::new(),
            backends: BTreeMap::new(),
            started_at: now,
            updated_at: now,
        }
    }

    /// Load an existing manifest, or start a fresh one.
    pub fn load_or_new(path: &Path, config: &RunConfig) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::new(config));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        m.config = config.clone();
        Ok(m)
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let h = io::file_sha256(path)?;
        self.inputs.insert(path.display().to_string(), h);
        Ok(())
    }

    pub fn record_stage(&mut self, name: &str, record: StageRecord) {
        self.stages.insert(name.to_string(), record);
    }

    pub fn complete(output: &Path, bytes: &[u8], total: usize) -> StageRecord {
        StageRecord {
            status: StageStatus::Complete,
            output: Some(output.display().to_string()),
            output_sha256: Some(io::sha256_hex(bytes)),
            completed: total,
            total,
            error: None,
            finished_at: unix_now(),
        }
    }

    pub fn save(&mut self, path: &Path) -> Result<()> {
        self.updated_at = unix_now();
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        io::write_atomic(path, &bytes)
    }
}
