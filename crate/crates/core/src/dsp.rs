//! Small signal-processing helpers shared by the pipeline and vitals code.

use num_complex::Complex64;
use rustfft::FftPlanner;

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

/// Population standard deviation.
pub fn std(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

pub fn demean(x: &[f64]) -> Vec<f64> {
    let m = mean(x);
    x.iter().map(|v| v - m).collect()
}

/// Median (sorts in place). NaN sorts last. Empty input gives NaN.
pub fn median(values: &mut [f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolated quantile (sorts in place).
pub fn quantile(values: &mut [f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 || values[lo] == values[hi] {
        // also keeps infinite entries from turning into NaN
        return values[lo];
    }
    values[lo] + (values[hi] - values[lo]) * frac
}

/// Interquartile range.
pub fn iqr(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let q3 = quantile(&mut v, 0.75);
    q3 - quantile(&mut v, 0.25)
}

/// Zero-phase FFT band-pass keeping `[lo_hz, hi_hz]`; the mean is always removed.
pub fn bandpass(x: &[f64], fs: f64, lo_hz: f64, hi_hz: f64) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return vec![];
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let kk = k.min(n - k);
        let f = kk as f64 * fs / n as f64;
        if kk == 0 || f < lo_hz || f > hi_hz {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Band-pass complex series (both spectral sides).
pub fn bandpass_complex(x: &mut [Complex64], fs: f64, lo_hz: f64, hi_hz: f64) {
    let n = x.len();
    if n == 0 {
        return;
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(x);
    for (k, c) in x.iter_mut().enumerate() {
        let kk = k.min(n - k);
        let f = kk as f64 * fs / n as f64;
        if kk == 0 || f < lo_hz || f > hi_hz {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(x);
    let s = 1.0 / n as f64;
    x.iter_mut().for_each(|c| *c *= s);
}

/// Hann-windowed one-sided power spectrum, zero-padded to at least `min_len`
/// (rounded up to a power of two). Returns `(bin width Hz, power)`.
pub fn periodogram(x: &[f64], fs: f64, min_len: usize) -> (f64, Vec<f64>) {
    let n = x.len();
    let len = min_len.max(n).next_power_of_two();
    let m = mean(x);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (i, &v) in x.iter().enumerate() {
        let w = 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / (n.max(2) - 1) as f64).cos();
        buf[i] = Complex64::new((v - m) * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let power = buf[..len / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
    (fs / len as f64, power)
}

/// Hann-windowed power of `x` at each frequency in `freqs` (Hz), on the same
/// scale as [`periodogram`].
pub fn power_at(x: &[f64], fs: f64, freqs: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let w: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - m) * (0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / (n.max(2) - 1) as f64).cos()))
        .collect();
    freqs
        .iter()
        .map(|&f| {
            let step = Complex64::from_polar(1.0, -std::f64::consts::TAU * f / fs);
            let mut rot = Complex64::new(1.0, 0.0);
            let mut acc = Complex64::new(0.0, 0.0);
            for &v in &w {
                acc += rot * v;
                rot *= step;
            }
            acc.norm_sqr()
        })
        .collect()
}

/// Vertex offset in `(-0.5, 0.5)` of the parabola through three samples.
pub fn parabolic_offset(a: f64, b: f64, c: f64) -> f64 {
    let d = a - 2.0 * b + c;
    if d == 0.0 {
        0.0
    } else {
        (0.5 * (a - c) / d).clamp(-0.5, 0.5)
    }
}

/// Local maxima whose topographic prominence is at least `min_prominence`.
/// Plateaus report their first sample.
pub fn find_peaks(x: &[f64], min_prominence: f64) -> Vec<usize> {
    let n = x.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i] > x[i - 1] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] && prominence(x, i, j) >= min_prominence {
                peaks.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

fn prominence(x: &[f64], first: usize, last: usize) -> f64 {
    let h = x[first];
    let mut left_min = h;
    for k in (0..first).rev() {
        if x[k] > h {
            break;
        }
        left_min = left_min.min(x[k]);
    }
    let mut right_min = h;
    for &v in &x[last + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}
