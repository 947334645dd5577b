use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Ok,
    /// The task raised a runtime error.
    Failed,
    /// The task ran but a numerical check did not pass.
    CheckFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub name: String,
    pub status: TaskStatus,
    pub message: Option<String>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub label: String,
    /// Relative to the run directory.
    pub dir: String,
    pub seeds: Vec<u64>,
    pub tasks: Vec<TaskRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub experiment: String,
    pub seeds: Vec<u64>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub wall_seconds: f64,
    /// sha256 of every emitted file, keyed by path relative to the run directory.
    pub files: BTreeMap<String, String>,
    pub points: Vec<PointRecord>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

impl RunManifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    /// Worst task status across all points.
    pub fn status(&self) -> TaskStatus {
        let all = self.points.iter().flat_map(|p| &p.tasks);
        if all.clone().any(|t| t.status == TaskStatus::Failed) {
            TaskStatus::Failed
        } else if all.clone().any(|t| t.status == TaskStatus::CheckFailed) {
            TaskStatus::CheckFailed
        } else {
            TaskStatus::Ok
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.status() {
            TaskStatus::Ok => 0,
            TaskStatus::Failed => 2,
            TaskStatus::CheckFailed => 3,
        }
    }

    pub fn write(&self, run_dir: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| HarnessError::Runtime(e.to_string()))?;
        std::fs::write(run_dir.join(Self::FILE_NAME), text)?;
        Ok(())
    }

    pub fn read(run_dir: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(run_dir.join(Self::FILE_NAME))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Runtime(e.to_string()))
    }

    /// Files whose current digest differs from the recorded one.
    pub fn mismatched_files(&self, run_dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|(rel, digest)| sha256_file(&run_dir.join(rel)).map_or(true, |d| &d != *digest))
            .map(|(rel, _)| rel.clone())
            .collect()
    }
}
