//! What the CLI subcommands do, minus argument parsing.

use std::path::{Path, PathBuf};

use vitalsim_core::pipeline::{self, checkpoint, PrepConfig, TrainConfig};
use vitalsim_core::radar::ArrayLayout;
use vitalsim_core::sync::LinkProfile;

use crate::config;
use crate::frames::{self, FrameFile};
use crate::run::{self, EvalOptions, ResultRow, RunError};
use crate::study::{self, StudyOptions};
use crate::truth::{self, GroundTruth};

/// Simulate the configured scene and write the frame file plus its sidecar.
/// Returns the sidecar path.
pub fn simulate(config_path: &Path, out: &Path, seed: Option<u64>) -> Result<PathBuf, RunError> {
    let (cfg, scene) = config::load(config_path)?;
    let seed = seed.unwrap_or(cfg.seeds[0]);
    let sim = run::simulate(&cfg.setup(scene), seed)?;
    frames::save(&FrameFile::new(cfg.radar.fps, sim.frames)?, out)?;
    let gt = truth::sidecar_path(out);
    truth::save(&sim.truth, &gt)?;
    Ok(gt)
}

fn load_recording(frames_path: &Path, gt_path: &Path) -> Result<(FrameFile, GroundTruth, ArrayLayout), RunError> {
    let file = frames::load(frames_path)?;
    let gt = truth::load(gt_path)?;
    let layout = ArrayLayout::named(gt.layout, &gt.room, &gt.radar);
    if layout.n_rows() != file.elements as usize {
        return Err(RunError::Input(format!(
            "{} has {} element rows but layout {} needs {}",
            frames_path.display(),
            file.elements,
            gt.layout,
            layout.n_rows()
        )));
    }
    Ok((file, gt, layout))
}

pub struct Trained {
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Train on a recording (its sidecar supplies layout and radar parameters)
/// and write the checkpoint.
pub fn train(frames_path: &Path, out: &Path, iters: usize, seed: u64) -> Result<Trained, RunError> {
    let (file, gt, layout) = load_recording(frames_path, &truth::sidecar_path(frames_path))?;
    let prep = pipeline::prepare(&file.frames, &layout, &gt.radar, &PrepConfig::default())?;
    let cfg = TrainConfig { iterations: iters, seed, ..TrainConfig::default() };
    cfg.validate()?;
    let output = pipeline::train(&prep, &cfg)?;
    checkpoint::save(&output.model, out)?;
    let trace = &output.trace;
    Ok(Trained { initial_loss: trace[0], final_loss: *trace.last().unwrap_or(&trace[0]) })
}

/// Apply a checkpoint to a recording and score it against `gt_path`.
pub fn eval(frames_path: &Path, model_path: &Path, gt_path: &Path, heart: bool) -> Result<Vec<ResultRow>, RunError> {
    let (file, gt, layout) = load_recording(frames_path, gt_path)?;
    let model = checkpoint::load(model_path)?;
    let prep_cfg = PrepConfig::default();
    let prep = pipeline::prepare(&file.frames, &layout, &gt.radar, &prep_cfg)?;
    if prep.receivers != model.dims.receivers {
        return Err(RunError::Input(format!(
            "model expects {} receivers, recording has {}",
            model.dims.receivers, prep.receivers
        )));
    }
    let comps = pipeline::extract_components(&model, &prep, prep_cfg.band_hz)?;
    let run_id = frames_path.file_stem().map_or_else(|| "run".to_string(), |s| s.to_string_lossy().into_owned());
    run::evaluate(&run_id, &comps, &gt, prep_cfg.band_hz, EvalOptions { heart })
}

pub fn sync_bench(profile: LinkProfile, seed: u64, out: Option<&Path>) -> Result<study::SyncSummary, RunError> {
    let report = study::StudyReport { sync: study::sync_bench(profile, seed)?, ..Default::default() };
    if let Some(out) = out {
        study::write_csv(out, &report.sync)?;
    }
    let summary = study::summarize("sync_bench", &[seed], &report);
    Ok(summary.sync.and_then(|mut s| s.pop()).expect("one profile was benchmarked"))
}

pub fn study(name: &str, seeds: &str, subjects: usize, out_dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    study::check_name(name)?;
    let seeds = study::parse_seeds(seeds)?;
    let report = study::run_study(name, &seeds, StudyOptions { subjects })?;
    study::write_outputs(out_dir, name, &seeds, &report)
}
