use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::Result;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_NAME: &str = "run_manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageState {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub stage: String,
    pub state: StageState,
    pub detail: String,
}

/// Record of one CLI invocation. Timestamps are wall-clock seconds and are
/// the only non-reproducible content of a run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub started_unix_s: u64,
    pub finished_unix_s: Option<u64>,
    pub config: ExperimentConfig,
    pub artifacts: Vec<PathBuf>,
    pub stages: Vec<StageStatus>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn start(config: &ExperimentConfig) -> Result<Self> {
        Ok(RunManifest {
            config_hash: config.hash()?,
            tool_version: TOOL_VERSION.to_string(),
            started_unix_s: now(),
            finished_unix_s: None,
            config: config.clone(),
            artifacts: Vec::new(),
            stages: Vec::new(),
        })
    }

    pub fn record(&mut self, stage: &str, outcome: std::result::Result<String, String>) {
        let (state, detail) = match outcome {
            Ok(d) => (StageState::Ok, d),
            Err(d) => (StageState::Failed, d),
        };
        self.stages.push(StageStatus {
            stage: stage.to_string(),
            state,
            detail,
        });
    }

    pub fn add_artifacts(&mut self, root: &Path, paths: &[PathBuf]) {
        for p in paths {
            let rel = p.strip_prefix(root).unwrap_or(p).to_path_buf();
            if !self.artifacts.contains(&rel) {
                self.artifacts.push(rel);
            }
        }
    }

    pub fn finish(&mut self) {
        self.finished_unix_s = Some(now());
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(MANIFEST_NAME);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_NAME))?)?)
    }
}
