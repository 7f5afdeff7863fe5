//! Momentum-SGD training on contrastive pairs.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::model::{ModelDims, Sample, SeparatorModel};
use super::pairs::{assemble, make_pairs, PairBatch, PairConfig};
use super::prepare::Prepared;
use super::PipelineError;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    /// anchors per step; each yields one positive and one negative
    pub batch: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// global gradient-norm clip
    pub clip_norm: f64,
    pub seed: u64,
    pub pairs: PairConfig,
    pub heads: usize,
    pub d_k: usize,
    pub hidden: Vec<usize>,
    /// anchors in the fixed batch used for the loss trace
    pub monitor: usize,
    /// initial attention sharpness along the leading input directions;
    /// 0 keeps the plain random init
    pub attention_gain: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            batch: 256,
            learning_rate: 0.5,
            momentum: 0.9,
            clip_norm: 1.0,
            seed: 0,
            pairs: PairConfig::default(),
            heads: 8,
            d_k: 4,
            hidden: vec![64, 32, 8],
            monitor: 64,
            attention_gain: 16.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.iterations == 0 {
            return Err(PipelineError::Config("iterations must be at least 1".into()));
        }
        if self.batch == 0 || self.monitor == 0 {
            return Err(PipelineError::Config("batch and monitor sizes must be positive".into()));
        }
        if !(self.attention_gain >= 0.0) {
            return Err(PipelineError::Config("attention_gain must be non-negative".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.clip_norm > 0.0) {
            return Err(PipelineError::Config("need learning_rate > 0, momentum in [0, 1), clip_norm > 0".into()));
        }
        Ok(())
    }

    pub fn dims(&self, prep: &Prepared) -> ModelDims {
        ModelDims {
            heads: self.heads,
            receivers: prep.receivers,
            window: prep.window,
            d_k: self.d_k,
            hidden: self.hidden.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub model: SeparatorModel,
    /// monitor-batch loss before training and after every step
    pub trace: Vec<f64>,
}

fn materialize(prep: &Prepared, batch: &PairBatch) -> (Vec<f64>, Vec<f64>) {
    let per = prep.receivers * 2 * prep.row_len();
    let mut buf = vec![0.0; batch.len() * per];
    let mut labels = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let (t, lag, label) = batch.sample(i);
        assemble(prep, t, lag, &mut buf[i * per..(i + 1) * per]);
        labels.push(label);
    }
    (buf, labels)
}

fn samples<'a>(buf: &'a [f64], labels: &[f64]) -> Vec<Sample<'a>> {
    let per = buf.len() / labels.len();
    buf.chunks_exact(per).zip(labels).map(|(x, &l)| Sample { inputs: x, label: l }).collect()
}

/// Stride between frames pooled for the input covariance.
const COV_STRIDE: usize = 7;

/// Leading `k` eigenvectors (row-major `[D][k]`) of the second-moment matrix
/// of pair inputs pooled over receivers, and the sum of their eigenvalues.
/// Seeding tied query and key projections with them makes the initial score
/// of a receiver its agreement with the receiver mean in the dominant
/// subspace.
pub fn principal_directions(prep: &Prepared, lag: usize, k: usize) -> (Vec<f64>, f64) {
    let dim = 2 * prep.row_len();
    let mut buf = vec![0.0; prep.receivers * dim];
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut n = 0usize;
    for t in (lag.min(prep.len.saturating_sub(1))..prep.len).step_by(COV_STRIDE) {
        assemble(prep, t, lag, &mut buf);
        let x = DMatrix::from_column_slice(dim, prep.receivers, &buf);
        cov += &x * x.transpose();
        n += prep.receivers;
    }
    if n == 0 {
        return (vec![0.0; dim * k], 0.0);
    }
    cov /= n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut idx: Vec<usize> = (0..dim).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut dirs = vec![0.0; dim * k];
    let mut power = 0.0;
    for (j, &c) in idx.iter().take(k).enumerate() {
        power += eig.eigenvalues[c].max(0.0);
        for i in 0..dim {
            dirs[i * k + j] = eig.eigenvectors[(i, c)];
        }
    }
    (dirs, power)
}

/// Train a separator on prepared receiver series. Deterministic in `cfg.seed`.
pub fn train(prep: &Prepared, cfg: &TrainConfig) -> Result<TrainOutput, PipelineError> {
    cfg.validate()?;
    let mut model = SeparatorModel::init(cfg.dims(prep), cfg.pairs.lag_s, cfg.seed)?;
    if cfg.attention_gain > 0.0 {
        let lag = (cfg.pairs.lag_s * prep.fps).round() as usize;
        let (dirs, power) = principal_directions(prep, lag, cfg.d_k);
        if power > 0.0 {
            model.seed_attention(&dirs, (cfg.attention_gain * (cfg.d_k as f64).sqrt() / power).sqrt())?;
        }
    }
    let monitor = make_pairs(prep.len, prep.fps, &cfg.pairs, cfg.monitor, rng::key(&[cfg.seed, rng::tag::MONITOR]))?;
    let (mbuf, mlab) = materialize(prep, &monitor);
    let mon = samples(&mbuf, &mlab);
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    trace.push(model.loss(&mon)?);
    let mut velocity = vec![0.0; model.n_params()];
    for it in 0..cfg.iterations {
        let batch = make_pairs(
            prep.len,
            prep.fps,
            &cfg.pairs,
            cfg.batch,
            rng::key(&[cfg.seed, rng::tag::PAIRS, it as u64]),
        )?;
        let (buf, lab) = materialize(prep, &batch);
        let (_, mut g) = model
            .gradients(&samples(&buf, &lab))
            .map_err(|_| PipelineError::NonFinite { iteration: Some(it) })?;
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > cfg.clip_norm {
            let s = cfg.clip_norm / norm;
            g.iter_mut().for_each(|v| *v *= s);
        }
        for ((p, v), gi) in model.params.iter_mut().zip(velocity.iter_mut()).zip(&g) {
            *v = cfg.momentum * *v - cfg.learning_rate * gi;
            *p += *v;
        }
        let l = model.loss(&mon).map_err(|_| PipelineError::NonFinite { iteration: Some(it) })?;
        trace.push(l);
    }
    Ok(TrainOutput { model, trace })
}
