//! Turns raw CIR frames into per-receiver windowed series `S_m(t)`.
//!
//! Each physical Rx element becomes one receiver channel: Tx and Rx weights
//! of its board are steered toward the board's strongest return. Every board
//! gets its own window, recentered on its most time-varying bin so that the
//! vital bin sits at the same window offset on every board.

use num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::radar::{beam_power, receiver_channels, ArrayLayout, CirFrame, RadarParams, N_BINS};

use super::window::select_window_power;
use super::PipelineError;

pub const VITAL_BAND_HZ: (f64, f64) = (0.05, 3.5);
/// Angle scan used to steer each board.
const STEER_LIMIT_DEG: f64 = 60.0;
const STEER_STEP_DEG: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepConfig {
    /// window width in bins
    pub window: usize,
    pub band_hz: (f64, f64),
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self { window: 30, band_hz: VITAL_BAND_HZ }
    }
}

/// Windowed, filtered receiver series.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub fps: f64,
    /// window width `N`
    pub window: usize,
    /// receiver count `M`
    pub receivers: usize,
    /// frames `T`
    pub len: usize,
    pub receiver_board: Vec<usize>,
    pub steer_deg: Vec<f64>,
    pub starts: Vec<usize>,
    pub vital_bins: Vec<usize>,
    /// `[M][T][2N]`, interleaved (re, im) per bin
    pub data: Vec<f64>,
}

impl Prepared {
    pub fn row_len(&self) -> usize {
        2 * self.window
    }

    /// `S_m(t)` as 2N reals.
    pub fn slice(&self, m: usize, t: usize) -> &[f64] {
        let w = self.row_len();
        let o = (m * self.len + t) * w;
        &self.data[o..o + w]
    }

    pub fn duration(&self) -> f64 {
        self.len as f64 / self.fps
    }
}

/// Look angle of each board (0 for single elements): the strongest
/// delay-and-sum response of the coherent time-mean frame over all bins.
/// Averaging in time suppresses noise by the record length while a static,
/// breathing chest keeps a large mean reflection.
pub fn steer_angles(frames: &[CirFrame], layout: &ArrayLayout, params: &RadarParams) -> Result<Vec<f64>, PipelineError> {
    let rows = layout.n_rows();
    let mut acc = vec![Complex64::new(0.0, 0.0); rows * N_BINS];
    for f in frames {
        for (a, c) in acc.iter_mut().zip(&f.bins) {
            *a += Complex64::new(c.re as f64, c.im as f64);
        }
    }
    let inv = 1.0 / frames.len().max(1) as f64;
    let mean = CirFrame {
        t: 0.0,
        rows,
        bins: acc.iter().map(|c| Complex32::new((c.re * inv) as f32, (c.im * inv) as f32)).collect(),
    };
    let mut out = Vec::with_capacity(layout.n_boards());
    for (b, sa) in layout.sub_arrays.iter().enumerate() {
        if sa.elements.len() < 2 {
            out.push(0.0);
            continue;
        }
        let steps = (2.0 * STEER_LIMIT_DEG / STEER_STEP_DEG).round() as usize;
        let mut best = (0.0, 0.0);
        for bin in 0..N_BINS {
            for s in 0..=steps {
                let a = -STEER_LIMIT_DEG + s as f64 * STEER_STEP_DEG;
                let p = beam_power(&mean, layout, b, params, bin, a)?;
                if p > best.1 {
                    best = (a, p);
                }
            }
        }
        out.push(best.0);
    }
    Ok(out)
}

fn principal_angle(z: &[Complex64]) -> f64 {
    let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
    for c in z {
        xx += c.re * c.re;
        yy += c.im * c.im;
        xy += c.re * c.im;
    }
    0.5 * (2.0 * xy).atan2(xx - yy)
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa * bb).sqrt()
    }
}

/// Build receiver series from frames.
pub fn prepare(
    frames: &[CirFrame],
    layout: &ArrayLayout,
    params: &RadarParams,
    cfg: &PrepConfig,
) -> Result<Prepared, PipelineError> {
    if frames.is_empty() {
        return Err(PipelineError::NoFrames);
    }
    let n = cfg.window;
    if n == 0 || n > N_BINS {
        return Err(PipelineError::WindowWidth { width: n, bins: N_BINS });
    }
    if let Some(f) = frames.iter().find(|f| f.rows != layout.n_rows()) {
        return Err(PipelineError::Shape(format!("frame has {} rows, layout needs {}", f.rows, layout.n_rows())));
    }
    let steer = steer_angles(frames, layout, params)?;
    let m_count = layout.n_receivers();
    let t_len = frames.len();
    let boards = layout.receiver_boards();

    // full-range receiver series [m][t][bin]
    let mut full = vec![Complex32::new(0.0, 0.0); m_count * t_len * N_BINS];
    for (t, f) in frames.iter().enumerate() {
        let ch = receiver_channels(f, layout, &steer, params);
        for m in 0..m_count {
            let dst = &mut full[(m * t_len + t) * N_BINS..(m * t_len + t + 1) * N_BINS];
            for (d, s) in dst.iter_mut().zip(&ch[m * N_BINS..(m + 1) * N_BINS]) {
                *d = Complex32::new(s.re as f32, s.im as f32);
            }
        }
    }
    let at = |m: usize, t: usize, b: usize| {
        let c = full[(m * t_len + t) * N_BINS + b];
        Complex64::new(c.re as f64, c.im as f64)
    };

    // per-board window and vital bin
    let mut starts = vec![0; layout.n_boards()];
    let mut vitals = vec![0; layout.n_boards()];
    for b in 0..layout.n_boards() {
        // coherent board beam: sum of the board's steered receivers
        let ms: Vec<usize> = (0..m_count).filter(|&m| boards[m] == b).collect();
        let mut power = vec![0.0; N_BINS];
        let mut var = vec![0.0; N_BINS];
        let mut beam = vec![Complex64::new(0.0, 0.0); t_len];
        for k in 0..N_BINS {
            for (t, v) in beam.iter_mut().enumerate() {
                *v = ms.iter().map(|&m| at(m, t, k)).sum();
            }
            let mean = beam.iter().sum::<Complex64>() / t_len as f64;
            power[k] = beam.iter().map(|c| c.norm_sqr()).sum();
            var[k] = beam.iter().map(|c| (c - mean).norm_sqr()).sum();
        }
        let s0 = select_window_power(&power, n)?;
        let vital = (s0..s0 + n).fold(s0, |best, k| if var[k] > var[best] { k } else { best });
        vitals[b] = vital;
        starts[b] = vital.saturating_sub(n / 2).min(N_BINS - n);
    }

    // windowed, band-passed complex series per receiver
    let mut win: Vec<Vec<Vec<Complex64>>> = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let b = boards[m];
        let mut bins = Vec::with_capacity(n);
        for k in starts[b]..starts[b] + n {
            let mut z: Vec<Complex64> = (0..t_len).map(|t| at(m, t, k)).collect();
            let mean = z.iter().sum::<Complex64>() / t_len as f64;
            z.iter_mut().for_each(|c| *c -= mean);
            dsp::bandpass_complex(&mut z, params.fps, cfg.band_hz.0, cfg.band_hz.1);
            bins.push(z);
        }
        // rotate the vital-bin trajectory onto the real axis
        let vk = vitals[b] - starts[b];
        let rot = Complex64::from_polar(1.0, -principal_angle(&bins[vk]));
        for z in &mut bins {
            z.iter_mut().for_each(|c| *c *= rot);
        }
        win.push(bins);
    }
    drop(full);

    // sign alignment, strongest receivers first
    let vital_re: Vec<Vec<f64>> = (0..m_count)
        .map(|m| win[m][vitals[boards[m]] - starts[boards[m]]].iter().map(|c| c.re).collect())
        .collect();
    let energy: Vec<f64> = vital_re.iter().map(|r| r.iter().map(|v| v * v).sum()).collect();
    let mut order: Vec<usize> = (0..m_count).collect();
    order.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]).then(a.cmp(&b)));
    let mut sign = vec![1.0; m_count];
    for (i, &m) in order.iter().enumerate().skip(1) {
        let mut best = (0.0, 0.0f64);
        for &a in &order[..i] {
            let c = sign[a] * correlation(&vital_re[m], &vital_re[a]);
            if c.abs() > best.1.abs() {
                best = (c, c);
            }
        }
        if best.0 < 0.0 {
            sign[m] = -1.0;
        }
    }

    let w = 2 * n;
    let mut data = vec![0.0; m_count * t_len * w];
    for m in 0..m_count {
        for t in 0..t_len {
            let o = (m * t_len + t) * w;
            for k in 0..n {
                let c = win[m][k][t] * sign[m];
                data[o + 2 * k] = c.re;
                data[o + 2 * k + 1] = c.im;
            }
        }
    }
    let rms = (data.iter().map(|v| v * v).sum::<f64>() / data.len() as f64).sqrt();
    if rms > 0.0 {
        data.iter_mut().for_each(|v| *v /= rms);
    }
    Ok(Prepared {
        fps: params.fps,
        window: n,
        receivers: m_count,
        len: t_len,
        receiver_board: boards,
        steer_deg: steer,
        starts,
        vital_bins: vitals,
        data,
    })
}
