//! One simulate -> separate -> evaluate run.

use serde::Serialize;
use thiserror::Error;
use vitalsim_core::dsp;
use vitalsim_core::pipeline::{self, PipelineError, PrepConfig, Prepared, SeparatorModel, TrainConfig};
use vitalsim_core::radar::{self, ArrayLayout, CirFrame, LayoutName, RadarError, RadarParams};
use vitalsim_core::scene::{Scene, SceneError};
use vitalsim_core::sync::{self, LinkProfile, SyncError, TonePair};
use vitalsim_core::vitals::{self, VitalKind, VitalsError, DEFAULT_MAX_LAG_S, HEART_BAND_BPM, RESP_BAND_BPM};

use crate::config::ConfigError;
use crate::frames::FrameFileError;
use crate::truth::{GroundTruth, SubjectTruth};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scene: {0}")]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Radar(#[from] RadarError),
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Vitals(#[from] VitalsError),
    #[error(transparent)]
    Frames(#[from] FrameFileError),
    #[error(transparent)]
    Checkpoint(#[from] pipeline::checkpoint::CheckpointError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl RunError {
    /// Failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, RunError::Pipeline(PipelineError::NonFinite { .. }) | RunError::Vitals(_) | RunError::Sync(_))
    }
}

/// What to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub scene: Scene,
    pub layout: LayoutName,
    pub radar: RadarParams,
    pub sync: LinkProfile,
    pub duration_s: f64,
}

impl Setup {
    pub fn new(scene: Scene, layout: LayoutName) -> Self {
        Self { scene, layout, radar: RadarParams::default(), sync: LinkProfile::Los, duration_s: crate::scenario::RECORD_S }
    }
}

pub struct Simulated {
    pub frames: Vec<CirFrame>,
    pub layout: ArrayLayout,
    pub truth: GroundTruth,
}

/// Synthesize frames and ground truth. The run seed replaces the scene seed.
pub fn simulate(setup: &Setup, seed: u64) -> Result<Simulated, RunError> {
    let mut scene = setup.scene.clone();
    scene.seed = seed;
    scene.validate()?;
    setup.radar.validate()?;
    let layout = ArrayLayout::named(setup.layout, &scene.room, &setup.radar);
    let clocks = sync::establish_clocks(setup.sync, layout.n_boards(), false, TonePair::default(), seed);
    let times: Vec<f64> = radar::frame_times(setup.duration_s, setup.radar.fps).collect();
    let frames = times
        .iter()
        .map(|&t| radar::synthesize_frame(&scene, &layout, &clocks, &setup.radar, t))
        .collect::<Result<Vec<_>, _>>()?;
    let subjects = scene
        .subjects
        .iter()
        .enumerate()
        .map(|(id, s)| SubjectTruth {
            id,
            resp_rate_bpm: s.chest.realized_resp_rate(scene.jitter_key(id), setup.duration_s),
            heart_rate_bpm: s.chest.heart_rate,
            displacement_m: times.iter().map(|&t| scene.displacement(id, t)).collect(),
            heartbeat_m: times.iter().map(|&t| s.chest.heartbeat(t)).collect(),
        })
        .collect();
    let truth = GroundTruth {
        seed,
        fps: setup.radar.fps,
        duration_s: setup.duration_s,
        layout: setup.layout,
        room: scene.room,
        radar: setup.radar.clone(),
        sync: setup.sync,
        subjects,
    };
    Ok(Simulated { frames, layout, truth })
}

/// One row of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub run_id: String,
    pub subject_id: usize,
    /// vital being evaluated
    pub kind: String,
    pub rate_bpm: f64,
    pub gt_bpm: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub cosine: f64,
}

impl ResultRow {
    /// Absolute error with a failed estimate counted as infinitely wrong.
    pub fn error_or_inf(&self) -> f64 {
        if self.abs_err.is_finite() {
            self.abs_err
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalOptions {
    /// also evaluate heart rate per subject
    pub heart: bool,
}

fn hz(band_bpm: (f64, f64)) -> (f64, f64) {
    (band_bpm.0 / 60.0, band_bpm.1 / 60.0)
}

/// Cosine that ignores the sign ambiguity of the unmixing.
pub fn unsigned_cosine(a: &[f64], b: &[f64], max_lag: usize) -> f64 {
    let neg: Vec<f64> = a.iter().map(|v| -v).collect();
    let p = vitals::cosine_similarity(a, b, max_lag).unwrap_or(-1.0);
    let n = vitals::cosine_similarity(&neg, b, max_lag).unwrap_or(-1.0);
    p.max(n)
}

fn row(run_id: &str, id: usize, kind: VitalKind, rate: Option<f64>, gt: f64, cosine: f64) -> ResultRow {
    let (rate_bpm, abs_err, rel_err) = match rate.map(|r| (r, vitals::bpm_error(r, gt))) {
        Some((r, Ok((a, e)))) => (r, a, e),
        _ => (f64::NAN, f64::NAN, f64::NAN),
    };
    ResultRow { run_id: run_id.to_string(), subject_id: id, kind: kind.as_str().to_string(), rate_bpm, gt_bpm: gt, abs_err, rel_err, cosine }
}

/// Match components to subjects by cosine with the band-passed displacement
/// and score the matched component's rate. The reference rate is the same
/// estimator applied to the true waveform, as with a chest-belt reference.
pub fn evaluate(
    run_id: &str,
    components: &[Vec<f64>],
    truth: &GroundTruth,
    band_hz: (f64, f64),
    opts: EvalOptions,
) -> Result<Vec<ResultRow>, RunError> {
    let fs = truth.fps;
    let max_lag = (DEFAULT_MAX_LAG_S * fs).round() as usize;
    let gts: Vec<Vec<f64>> =
        truth.subjects.iter().map(|s| dsp::bandpass(&s.displacement_m, fs, band_hz.0, band_hz.1)).collect();
    let sim: Vec<Vec<f64>> =
        gts.iter().map(|g| components.iter().map(|c| unsigned_cosine(c, g, max_lag)).collect()).collect();
    let assign = vitals::best_assignment(&sim)?;
    // short recordings cannot hold four cycles at the usual lower edge
    let duration = truth.subjects.first().map_or(0.0, |s| s.displacement_m.len() as f64 / fs);
    let resp_band = (RESP_BAND_BPM.0.max(4.0 * 60.0 / duration), RESP_BAND_BPM.1);
    let mut used = vec![false; components.len()];
    let mut rows = Vec::new();
    for (g, (s, &c)) in truth.subjects.iter().zip(&assign).enumerate() {
        used[c] = true;
        let rate = vitals::estimate_rate(&components[c], fs, resp_band).ok();
        let reference = vitals::estimate_rate(&gts[g], fs, resp_band)?;
        rows.push(row(run_id, s.id, VitalKind::Respiration, rate, reference, sim[g][c]));
    }
    if opts.heart {
        let (lo, hi) = hz(HEART_BAND_BPM);
        for s in &truth.subjects {
            let g = dsp::bandpass(&s.heartbeat_m, fs, lo, hi);
            let best = (0..components.len())
                .filter(|&c| !used[c])
                .map(|c| {
                    let w = dsp::bandpass(&components[c], fs, lo, hi);
                    (c, unsigned_cosine(&w, &g, max_lag), w)
                })
                .max_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((c, cos, w)) = best {
                used[c] = true;
                let rate = vitals::estimate_rate(&w, fs, HEART_BAND_BPM).ok();
                let reference = vitals::estimate_rate(&g, fs, HEART_BAND_BPM).unwrap_or(s.heart_rate_bpm);
                rows.push(row(run_id, s.id, VitalKind::Heartbeat, rate, reference, cos));
            }
        }
    }
    Ok(rows)
}

/// Everything a study may want from one run.
pub struct Outcome {
    pub rows: Vec<ResultRow>,
    pub loss_trace: Vec<f64>,
    /// per-board normalized attention
    pub attention: Vec<f64>,
    pub model: SeparatorModel,
    pub prepared: Prepared,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pipeline {
    pub prep: PrepConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
}

/// Simulate, train on the run itself, extract and evaluate.
pub fn run(setup: &Setup, seed: u64, pipe: &Pipeline, run_id: &str) -> Result<Outcome, RunError> {
    let sim = simulate(setup, seed)?;
    let cfg = TrainConfig { seed, ..pipe.train.clone() };
    let sep = pipeline::separate(&sim.frames, &sim.layout, &setup.radar, &pipe.prep, &cfg)?;
    let rows = evaluate(run_id, &sep.components, &sim.truth, pipe.prep.band_hz, pipe.eval)?;
    let attention = pipeline::attention_weights(&sep.output.model, &sep.prepared, sim.layout.n_boards())?;
    Ok(Outcome { rows, loss_trace: sep.output.trace, attention, model: sep.output.model, prepared: sep.prepared })
}

/// Apply an already trained model to a new recording.
pub fn apply(
    model: &SeparatorModel,
    sim: &Simulated,
    pipe: &Pipeline,
    run_id: &str,
) -> Result<Vec<ResultRow>, RunError> {
    let prep = pipeline::prepare(&sim.frames, &sim.layout, &sim.truth.radar, &pipe.prep)?;
    let comps = pipeline::extract_components(model, &prep, pipe.prep.band_hz)?;
    evaluate(run_id, &comps, &sim.truth, pipe.prep.band_hz, pipe.eval)
}
