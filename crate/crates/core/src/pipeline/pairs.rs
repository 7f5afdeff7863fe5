//! Contrastive pairs: `(S(t), S(t - T))` labelled 1 against `(S(t), S(t - delta))` labelled 0.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::prepare::Prepared;
use super::PipelineError;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairConfig {
    /// positive lag `T`, seconds
    pub lag_s: f64,
    /// negative lag range, seconds
    pub delta_min_s: f64,
    pub delta_max_s: f64,
    /// negative lags within this distance of `T` are excluded
    pub guard_s: f64,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self { lag_s: 1.0, delta_min_s: 0.1, delta_max_s: 5.0, guard_s: 0.2 }
    }
}

impl PairConfig {
    pub fn lag_samples(&self, fps: f64) -> usize {
        (self.lag_s * fps).round() as usize
    }

    fn validate(&self) -> Result<(), PipelineError> {
        let ok = self.lag_s > 0.0
            && self.delta_min_s > 0.0
            && self.delta_max_s > self.delta_min_s
            && self.guard_s >= 0.0
            && (self.lag_s - self.guard_s > self.delta_min_s || self.lag_s + self.guard_s < self.delta_max_s);
        if ok {
            Ok(())
        } else {
            Err(PipelineError::Config("pair lags: need 0 < delta_min < delta_max with room outside the guard".into()))
        }
    }
}

/// One anchor per positive/negative couple; samples interleave (pos, neg).
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub anchors: Vec<usize>,
    pub pos_lag: usize,
    pub neg_lags: Vec<usize>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        2 * self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// `(anchor, lag, label)` for sample `i`.
    pub fn sample(&self, i: usize) -> (usize, usize, f64) {
        let a = self.anchors[i / 2];
        if i % 2 == 0 {
            (a, self.pos_lag, 1.0)
        } else {
            (a, self.neg_lags[i / 2], 0.0)
        }
    }
}

/// Uniform draw from `[lo, hi]` minus the open interval `(gap_lo, gap_hi)`.
fn draw_outside(u: f64, lo: f64, hi: f64, gap_lo: f64, gap_hi: f64) -> f64 {
    let left = (gap_lo.min(hi) - lo).max(0.0);
    let right = (hi - gap_hi.max(lo)).max(0.0);
    let x = u * (left + right);
    if x < left {
        lo + x
    } else {
        gap_hi.max(lo) + (x - left)
    }
}

/// Sample `count` anchors with one positive and one negative each.
/// Anchors start at `T * fps`; negative lags never reach before the record start.
pub fn make_pairs(len: usize, fps: f64, cfg: &PairConfig, count: usize, key: u64) -> Result<PairBatch, PipelineError> {
    cfg.validate()?;
    let lag = cfg.lag_samples(fps);
    if lag == 0 || lag >= len {
        return Err(PipelineError::RecordTooShort { lag_s: cfg.lag_s, duration_s: len as f64 / fps });
    }
    let mut g = rng::stream(key);
    let mut anchors = Vec::with_capacity(count);
    let mut neg = Vec::with_capacity(count);
    let (glo, ghi) = (cfg.lag_s - cfg.guard_s, cfg.lag_s + cfg.guard_s);
    for _ in 0..count {
        let t = g.gen_range(lag..len);
        let hi = cfg.delta_max_s.min(t as f64 / fps);
        let mut d = draw_outside(g.gen::<f64>(), cfg.delta_min_s, hi, glo, ghi);
        if !(d > 0.0) {
            d = cfg.delta_min_s;
        }
        let mut k = ((d * fps).round() as usize).clamp(1, t);
        if k == lag {
            k = if lag > 1 { lag - 1 } else { lag + 1 };
        }
        anchors.push(t);
        neg.push(k);
    }
    Ok(PairBatch { anchors, pos_lag: lag, neg_lags: neg })
}

/// Receiver inputs `Y_m = [S_m(t), S_m(t - lag)]` written as `[M][4N]`.
pub fn assemble(prep: &Prepared, t: usize, lag: usize, out: &mut [f64]) {
    let w = prep.row_len();
    let past = t.saturating_sub(lag);
    for m in 0..prep.receivers {
        let o = m * 2 * w;
        out[o..o + w].copy_from_slice(prep.slice(m, t));
        out[o + w..o + 2 * w].copy_from_slice(prep.slice(m, past));
    }
}
