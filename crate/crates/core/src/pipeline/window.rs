//! Range-bin window selection.

use crate::radar::{CirFrame, N_BINS};

use super::PipelineError;

/// Time-averaged power per range bin, summed over all rows.
pub fn bin_power(frames: &[CirFrame]) -> Vec<f64> {
    let mut p = vec![0.0; N_BINS];
    for f in frames {
        for r in 0..f.rows {
            for (b, c) in f.row(r).iter().enumerate() {
                p[b] += c.norm_sqr() as f64;
            }
        }
    }
    let n = frames.len().max(1) as f64;
    p.iter_mut().for_each(|v| *v /= n);
    p
}

/// Start of the width-`n` contiguous window with the largest summed power.
/// Ties go to the lowest start.
pub fn select_window_power(power: &[f64], n: usize) -> Result<usize, PipelineError> {
    if n == 0 || n > power.len() {
        return Err(PipelineError::WindowWidth { width: n, bins: power.len() });
    }
    let mut best = (0, f64::NEG_INFINITY);
    for start in 0..=power.len() - n {
        let s: f64 = power[start..start + n].iter().sum();
        if s > best.1 {
            best = (start, s);
        }
    }
    Ok(best.0)
}

/// Window start over the full frame set.
pub fn select_window(frames: &[CirFrame], n: usize) -> Result<usize, PipelineError> {
    if frames.is_empty() {
        return Err(PipelineError::NoFrames);
    }
    select_window_power(&bin_power(frames), n)
}
