//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use vitalsim_core::pipeline::{PrepConfig, TrainConfig};
use vitalsim_core::radar::{LayoutName, RadarParams, N_BINS};
use vitalsim_core::scene::Scene;
use vitalsim_core::sync::LinkProfile;

use crate::run::Setup;

/// Shortest record accepted for a training run.
pub const MIN_TRAIN_DURATION_S: f64 = 30.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: at `{key}`: {reason}")]
    Schema { path: PathBuf, key: String, reason: String },
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// scene JSON, relative to the config file
    pub scene: PathBuf,
    pub layout: LayoutName,
    #[serde(default)]
    pub radar: RadarParams,
    #[serde(default = "default_sync")]
    pub sync: LinkProfile,
    #[serde(default)]
    pub prep: PrepConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub duration_s: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_sync() -> LinkProfile {
    LinkProfile::Los
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn invalid(key: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), reason: reason.to_string() }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.duration_s >= MIN_TRAIN_DURATION_S) {
            return Err(invalid("duration_s", format!("must be at least {MIN_TRAIN_DURATION_S} s, got {}", self.duration_s)));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "needs at least one seed"));
        }
        self.radar.validate().map_err(|e| invalid("radar", e))?;
        self.train.validate().map_err(|e| invalid("train", e))?;
        if !(1..=N_BINS).contains(&self.prep.window) {
            return Err(invalid("prep.window", format!("must be within 1..={N_BINS}")));
        }
        let (lo, hi) = self.prep.band_hz;
        if !(lo >= 0.0 && hi > lo) {
            return Err(invalid("prep.band_hz", "needs 0 <= lo < hi"));
        }
        Ok(())
    }
}

/// Parse JSON, reporting the path of the offending key on failure.
pub fn parse<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Schema {
        path: path.to_path_buf(),
        key: e.path().to_string(),
        reason: e.inner().to_string(),
    })
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
}

pub fn load_scene(path: &Path) -> Result<Scene, ConfigError> {
    let scene: Scene = parse(&read(path)?, path)?;
    scene.validate().map_err(|e| invalid("scene", e))?;
    Ok(scene)
}

/// Load and validate a config and the scene it points to.
pub fn load(path: &Path) -> Result<(ExperimentConfig, Scene), ConfigError> {
    let cfg: ExperimentConfig = parse(&read(path)?, path)?;
    cfg.validate()?;
    let scene_path = path.parent().unwrap_or(Path::new(".")).join(&cfg.scene);
    let scene = load_scene(&scene_path)?;
    Ok((cfg, scene))
}

impl ExperimentConfig {
    pub fn setup(&self, scene: Scene) -> Setup {
        Setup { scene, layout: self.layout, radar: self.radar.clone(), sync: self.sync, duration_s: self.duration_s }
    }
}
