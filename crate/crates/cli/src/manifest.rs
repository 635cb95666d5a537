use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use dasps::data::SeriesDataset;
use dasps::training::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Identifies the exact input table of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub path: String,
    pub rows: usize,
    pub columns: usize,
    /// Hex SHA-256 of the file bytes.
    pub sha256: String,
}

impl DatasetFingerprint {
    pub fn of(path: &Path, ds: &SeriesDataset) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self {
            path: path.display().to_string(),
            rows: ds.rows(),
            columns: ds.cols(),
            sha256: hex(&Sha256::digest(&bytes)),
        })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// The only fields that differ between identical reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_secs: u64,
    pub elapsed_secs: f64,
}

/// Written beside every checkpoint. Rerunning `command` against a dataset
/// with the same fingerprint reproduces the recorded metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub seed: u64,
    pub config: TrainConfig,
    pub dataset: DatasetFingerprint,
    /// Artifact role → path.
    pub outputs: BTreeMap<String, String>,
    pub timing: Timing,
}

/// Wall clock captured at the start of a command.
pub struct Clock {
    started: SystemTime,
    instant: Instant,
}

impl Clock {
    pub fn start() -> Self {
        Self {
            started: SystemTime::now(),
            instant: Instant::now(),
        }
    }

    pub fn timing(&self) -> Timing {
        Timing {
            started_unix_secs: self
                .started
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            elapsed_secs: self.instant.elapsed().as_secs_f64(),
        }
    }
}
