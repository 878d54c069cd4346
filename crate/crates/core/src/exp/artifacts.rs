//! Run artifacts: manifests, field checkpoints, dataset snapshots. All JSON,
//! all written atomically (temp file in the target directory, then rename) so
//! a crash never leaves a half manifest behind.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::{MlpField, ToyDataset};
use crate::search::SuccessSet;

use super::{count_unique_successes, ExpConfig, COMPUTE_UNIT, DEFAULT_UNIQUE_THRESHOLD};

pub const CHECKPOINT_VERSION: u32 = 1;

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| CoreError::Serde(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .ok_or_else(|| CoreError::InvalidArgument(format!("{} has no parent directory", path.display())))?;
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CoreError::Io(e.error))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct RewardStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl RewardStats {
    /// None on an empty slice, so manifests never carry NaN.
    pub fn over(totals: &[f64]) -> Option<Self> {
        if totals.is_empty() {
            return None;
        }
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for &t in totals {
            min = min.min(t);
            max = max.max(t);
            sum += t;
        }
        Some(RewardStats { min, mean: sum / totals.len() as f64, max })
    }
}

/// The record of one run. Everything except `wall_clock_secs` is a pure
/// function of the config, so reruns can be compared byte for byte through
/// `comparable()`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub version: String,
    pub algorithm: String,
    pub seed: u64,
    pub compute_unit: String,
    pub total_evals: u64,
    pub wall_clock_secs: f64,
    pub n_accepted: usize,
    pub unique_successes: usize,
    pub reward_stats: Option<RewardStats>,
    pub config: ExpConfig,
}

impl RunManifest {
    pub fn build(
        cfg: &ExpConfig,
        set: &SuccessSet,
        total_evals: u64,
        wall_clock_secs: f64,
    ) -> Result<Self> {
        let totals: Vec<f64> = set.samples.iter().map(|s| s.reward.total).collect();
        Ok(RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            algorithm: cfg.algo.name().to_string(),
            seed: cfg.seed,
            compute_unit: COMPUTE_UNIT.to_string(),
            total_evals,
            wall_clock_secs,
            n_accepted: set.samples.len(),
            unique_successes: count_unique_successes(set, DEFAULT_UNIQUE_THRESHOLD)?,
            reward_stats: RewardStats::over(&totals),
            config: cfg.clone(),
        })
    }

    /// Copy with the wall clock zeroed, for determinism comparisons.
    pub fn comparable(&self) -> Self {
        let mut m = self.clone();
        m.wall_clock_secs = 0.0;
        m
    }
}

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CoreError::Serde(format!("{}: {e}", path.display())))
}

/// Versioned wrapper around serialized field weights. The version gate means
/// an old binary refuses a new checkpoint instead of misreading it.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FieldCheckpoint {
    pub version: u32,
    pub field: MlpField,
}

pub fn save_field(path: &Path, field: &MlpField) -> Result<()> {
    field.validate()?;
    let ckpt = FieldCheckpoint { version: CHECKPOINT_VERSION, field: field.clone() };
    atomic_write(path, &to_json_bytes(&ckpt)?)
}

pub fn load_field(path: &Path) -> Result<MlpField> {
    let text = fs::read_to_string(path)?;
    let ckpt: FieldCheckpoint =
        serde_json::from_str(&text).map_err(|e| CoreError::Serde(format!("{}: {e}", path.display())))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(CoreError::Config(format!(
            "checkpoint version {} unsupported (expected {})",
            ckpt.version, CHECKPOINT_VERSION
        )));
    }
    ckpt.field.validate()?;
    Ok(ckpt.field)
}

pub fn save_dataset(path: &Path, dataset: &ToyDataset) -> Result<()> {
    atomic_write(path, &to_json_bytes(dataset)?)
}

pub fn load_dataset(path: &Path) -> Result<ToyDataset> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CoreError::Serde(format!("{}: {e}", path.display())))
}
