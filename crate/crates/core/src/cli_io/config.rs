//! JSON run configuration for `train`, validated as a whole before any work.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::DatasetSpec;
use crate::autobcs_net::{NetworkConfig, TrainConfig};
use crate::error::{Error, Result};

/// Scalar type the network trains in. Saved models are always f32.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// `τ` and `A` live in `network`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default = "default_train")]
    pub train: TrainConfig,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub precision: Precision,
    /// Seed of the initial sampling matrix and U-net weights.
    #[serde(default)]
    pub model_seed: u64,
    #[serde(default)]
    pub model_out: Option<PathBuf>,
    /// Per-epoch loss CSV.
    #[serde(default)]
    pub log_out: Option<PathBuf>,
}

fn default_train() -> TrainConfig {
    let mut t = TrainConfig::default();
    t.schedule.clear();
    t
}

fn parent_exists(path: &Path) -> bool {
    match path.parent() {
        None => true,
        Some(p) if p.as_os_str().is_empty() => true,
        Some(p) => p.is_dir(),
    }
}

impl RunConfig {
    /// Parses JSON and fills a missing learning-rate schedule. Does not validate.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.train.fill_schedule();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Every field, including that the dataset directory exists and the
    /// output directories are present.
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.train.validate()?;
        self.dataset.validate(self.network.block_size)?;
        let align = self.network.unet_alignment();
        if self.dataset.patch_size % align != 0 {
            return Err(Error::Config(format!(
                "patch size {} must be divisible by {align} for a depth-{} network",
                self.dataset.patch_size, self.network.depth
            )));
        }
        if !self.dataset.source.is_dir() {
            return Err(Error::io(
                &self.dataset.source,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
            ));
        }
        for path in self.model_out.iter().chain(&self.log_out) {
            if !parent_exists(path) {
                return Err(Error::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "output directory not found"),
                ));
            }
        }
        Ok(())
    }
}
