//! Window selection, receiver preparation, contrastive training and
//! component extraction.

pub mod checkpoint;
pub mod extract;
pub mod model;
pub mod pairs;
pub mod prepare;
pub mod train;
pub mod window;

use thiserror::Error;

use crate::radar::{ArrayLayout, CirFrame, RadarError, RadarParams};

pub use extract::{attention_weights, extract_components};
pub use model::{ModelDims, SeparatorModel};
pub use pairs::{make_pairs, PairBatch, PairConfig};
pub use prepare::{prepare, PrepConfig, Prepared};
pub use train::{train, TrainConfig, TrainOutput};
pub use window::select_window;

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("no frames")]
    NoFrames,
    #[error("window width {width} must be within 1..={bins}")]
    WindowWidth { width: usize, bins: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("pair lag {lag_s} s does not fit a {duration_s} s record")]
    RecordTooShort { lag_s: f64, duration_s: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}", match .iteration { Some(i) => format!("loss became non-finite at iteration {i}"), None => "non-finite value in forward pass".to_string() })]
    NonFinite { iteration: Option<usize> },
    #[error(transparent)]
    Radar(#[from] RadarError),
}

/// Prepare, train and extract in one go.
pub struct Separation {
    pub prepared: Prepared,
    pub output: TrainOutput,
    pub components: Vec<Vec<f64>>,
}

pub fn separate(
    frames: &[CirFrame],
    layout: &ArrayLayout,
    params: &RadarParams,
    prep_cfg: &PrepConfig,
    cfg: &TrainConfig,
) -> Result<Separation, PipelineError> {
    let prepared = prepare(frames, layout, params, prep_cfg)?;
    let output = train(&prepared, cfg)?;
    let components = extract_components(&output.model, &prepared, prep_cfg.band_hz)?;
    Ok(Separation { prepared, output, components })
}
