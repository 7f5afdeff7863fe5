//! Ground-truth sidecar written next to every frame file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vitalsim_core::radar::{LayoutName, RadarParams};
use vitalsim_core::scene::Room;
use vitalsim_core::sync::LinkProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectTruth {
    pub id: usize,
    /// breathing rate realized over the record
    pub resp_rate_bpm: f64,
    pub heart_rate_bpm: f64,
    /// chest displacement at each frame time, meters
    pub displacement_m: Vec<f64>,
    /// heartbeat part of `displacement_m`
    pub heartbeat_m: Vec<f64>,
}

/// Everything `train` and `eval` need besides the frames themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub seed: u64,
    pub fps: f64,
    pub duration_s: f64,
    pub layout: LayoutName,
    pub room: Room,
    pub radar: RadarParams,
    pub sync: LinkProfile,
    pub subjects: Vec<SubjectTruth>,
}

/// `frames.mdsf` -> `frames.mdsf.gt.json`
pub fn sidecar_path(frames: &Path) -> PathBuf {
    let mut s = frames.as_os_str().to_owned();
    s.push(".gt.json");
    PathBuf::from(s)
}

pub fn save(truth: &GroundTruth, path: &Path) -> std::io::Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(f, truth).map_err(std::io::Error::other)
}

pub fn load(path: &Path) -> Result<GroundTruth, crate::config::ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| crate::config::ConfigError::Io { path: path.to_path_buf(), source })?;
    crate::config::parse(&text, path)
}
