//! Rate estimation, variability-based labelling and evaluation metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp;

pub const RESP_BAND_BPM: (f64, f64) = (6.0, 30.0);
pub const HEART_BAND_BPM: (f64, f64) = (40.0, 180.0);
/// Components with inter-peak variability at or above this are noise.
pub const VARIABILITY_THRESHOLD: f64 = 0.25;
/// Peak prominence, as a fraction of the waveform std.
pub const PEAK_PROMINENCE: f64 = 0.5;
/// In-band peak must exceed this multiple of the in-band median power.
pub const PEAK_TO_FLOOR: f64 = 3.0;
pub const MIN_PEAKS: usize = 5;
/// Default alignment search for cosine similarity, seconds.
pub const DEFAULT_MAX_LAG_S: f64 = 2.0;
/// Periodogram zero-padding target length.
const SPECTRUM_LEN: usize = 1 << 16;
/// sub-steps per bin when refining the spectral peak
const ZOOM: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum VitalsError {
    #[error("no rate: no in-band peak above {PEAK_TO_FLOOR}x the spectral floor")]
    NoRate,
    #[error("signal too short: need {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("invalid band ({0}, {1}) bpm")]
    Band(f64, f64),
    #[error("only {0} peaks detected, need at least {MIN_PEAKS}")]
    TooFewPeaks(usize),
    #[error("zero-norm input")]
    ZeroNorm,
    #[error("ground truth rate must be positive, got {0}")]
    GroundTruth(f64),
    #[error("{estimates} estimates cannot cover {gts} ground truths")]
    TooFewEstimates { estimates: usize, gts: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VitalKind {
    Respiration,
    Heartbeat,
    Noise,
}

impl VitalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VitalKind::Respiration => "respiration",
            VitalKind::Heartbeat => "heartbeat",
            VitalKind::Noise => "noise",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalEstimate {
    pub kind: VitalKind,
    /// dominant rate, when one was found
    pub rate_bpm: Option<f64>,
    pub waveform: Vec<f64>,
    pub fs: f64,
    pub variability: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub abs_error: f64,
    /// (measured - gt) / gt
    pub rel_error: f64,
    pub cosine: f64,
}

/// Periodogram peak rate within `band` (bpm), refined on a finer local grid
/// and then by quadratic interpolation.
pub fn estimate_rate(waveform: &[f64], fs: f64, band: (f64, f64)) -> Result<f64, VitalsError> {
    let (lo, hi) = band;
    if !(lo > 0.0 && hi > lo) {
        return Err(VitalsError::Band(lo, hi));
    }
    let need = (4.0 * 60.0 / lo * fs).ceil() as usize;
    if waveform.len() < need {
        return Err(VitalsError::TooShort { need, got: waveform.len() });
    }
    let (df, p) = dsp::periodogram(waveform, fs, SPECTRUM_LEN);
    let k_lo = ((lo / 60.0) / df).ceil().max(1.0) as usize;
    let k_hi = (((hi / 60.0) / df).floor() as usize).min(p.len() - 2);
    if k_hi <= k_lo {
        return Err(VitalsError::Band(lo, hi));
    }
    let (mut k, mut best) = (k_lo, f64::NEG_INFINITY);
    for (i, &v) in p.iter().enumerate().take(k_hi + 1).skip(k_lo) {
        if v > best {
            best = v;
            k = i;
        }
    }
    let mut floor: Vec<f64> = p[k_lo..=k_hi].to_vec();
    let floor = dsp::median(&mut floor);
    if !(best > PEAK_TO_FLOOR * floor) || best <= 0.0 {
        return Err(VitalsError::NoRate);
    }
    // zoom into the neighbouring bins before interpolating
    let freqs: Vec<f64> = (0..=2 * ZOOM).map(|j| (k as f64 - 1.0 + j as f64 / ZOOM as f64) * df).collect();
    let fine = dsp::power_at(waveform, fs, &freqs);
    let j = (1..2 * ZOOM).max_by(|&a, &b| fine[a].total_cmp(&fine[b])).unwrap_or(ZOOM);
    let off = dsp::parabolic_offset(fine[j - 1], fine[j], fine[j + 1]);
    Ok(((freqs[j] + off * df / ZOOM as f64) * 60.0).clamp(lo, hi))
}

/// Peak times (seconds) with sub-sample parabolic refinement.
pub fn peak_times(waveform: &[f64], fs: f64) -> Vec<f64> {
    let prom = PEAK_PROMINENCE * dsp::std(waveform);
    if prom == 0.0 {
        return vec![];
    }
    dsp::find_peaks(waveform, prom)
        .into_iter()
        .map(|i| {
            let off = dsp::parabolic_offset(waveform[i - 1], waveform[i], waveform[i + 1]);
            (i as f64 + off) / fs
        })
        .collect()
}

/// Population std over mean of a set of intervals.
pub fn interval_variability(intervals: &[f64]) -> f64 {
    dsp::std(intervals) / dsp::mean(intervals)
}

/// Fractional std of inter-peak intervals.
pub fn rate_variability(waveform: &[f64], fs: f64) -> Result<f64, VitalsError> {
    let t = peak_times(waveform, fs);
    if t.len() < MIN_PEAKS {
        return Err(VitalsError::TooFewPeaks(t.len()));
    }
    let iv: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(interval_variability(&iv))
}

/// Label a component by its dominant rate and its rhythm regularity.
pub fn classify_component(waveform: &[f64], fs: f64) -> VitalEstimate {
    let duration = waveform.len() as f64 / fs;
    let lo = RESP_BAND_BPM.0.max(4.0 * 60.0 / duration.max(1e-9));
    let rate = estimate_rate(waveform, fs, (lo, HEART_BAND_BPM.1)).ok();
    let variability = rate_variability(waveform, fs).ok();
    let regular = matches!(variability, Some(v) if v < VARIABILITY_THRESHOLD);
    let in_band = |r: f64, b: (f64, f64)| r >= b.0 && r <= b.1;
    let kind = match rate {
        Some(r) if regular && in_band(r, RESP_BAND_BPM) => VitalKind::Respiration,
        Some(r) if regular && in_band(r, HEART_BAND_BPM) => VitalKind::Heartbeat,
        _ => VitalKind::Noise,
    };
    VitalEstimate { kind, rate_bpm: rate, waveform: waveform.to_vec(), fs, variability }
}

fn centered_cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (dsp::mean(a), dsp::mean(b));
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x - ma, y - mb);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        None
    } else {
        Some((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
    }
}

/// Best mean-removed cosine over lags in `-max_lag..=max_lag` samples,
/// computed on the overlapping parts. Series are truncated to equal length.
pub fn cosine_similarity(a: &[f64], b: &[f64], max_lag: usize) -> Result<f64, VitalsError> {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    if dsp::std(a) == 0.0 || dsp::std(b) == 0.0 || n == 0 {
        return Err(VitalsError::ZeroNorm);
    }
    let max_lag = max_lag.min(n - 1);
    let mut best = f64::NEG_INFINITY;
    for lag in 0..=max_lag {
        // b delayed by lag against a, and a delayed by lag against b
        for (x, y) in [(&a[lag..], &b[..n - lag]), (&a[..n - lag], &b[lag..])] {
            if let Some(c) = centered_cosine(x, y) {
                best = best.max(c);
            }
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(VitalsError::ZeroNorm)
    }
}

/// Absolute and signed relative rate error.
pub fn bpm_error(measured: f64, gt: f64) -> Result<(f64, f64), VitalsError> {
    if !(gt > 0.0) {
        return Err(VitalsError::GroundTruth(gt));
    }
    Ok(((measured - gt).abs(), (measured - gt) / gt))
}

/// Injective assignment gt -> estimate maximizing summed similarity.
/// `sim[g][e]` is the similarity of ground truth `g` to estimate `e`.
/// Ties resolve to the lexicographically first assignment.
pub fn best_assignment(sim: &[Vec<f64>]) -> Result<Vec<usize>, VitalsError> {
    let g = sim.len();
    let e = sim.first().map_or(0, Vec::len);
    if e < g {
        return Err(VitalsError::TooFewEstimates { estimates: e, gts: g });
    }
    fn go(sim: &[Vec<f64>], row: usize, used: &mut Vec<bool>, cur: &mut Vec<usize>, score: f64, best: &mut (f64, Vec<usize>)) {
        if row == sim.len() {
            if score > best.0 {
                *best = (score, cur.clone());
            }
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                go(sim, row + 1, used, cur, score + sim[row][j], best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (f64::NEG_INFINITY, (0..g).collect());
    go(sim, 0, &mut vec![false; e], &mut Vec::with_capacity(g), 0.0, &mut best);
    Ok(best.1)
}

/// Match ground-truth waveforms to estimates by cosine similarity.
/// Returns, per ground truth, `(estimate index, cosine)`.
pub fn match_components(
    estimates: &[VitalEstimate],
    gts: &[Vec<f64>],
    max_lag: usize,
) -> Result<Vec<(usize, f64)>, VitalsError> {
    if estimates.len() < gts.len() {
        return Err(VitalsError::TooFewEstimates { estimates: estimates.len(), gts: gts.len() });
    }
    let sim: Vec<Vec<f64>> = gts
        .iter()
        .map(|g| {
            estimates
                .iter()
                .map(|e| cosine_similarity(&e.waveform, g, max_lag).unwrap_or(-1.0))
                .collect()
        })
        .collect();
    let a = best_assignment(&sim)?;
    Ok(a.iter().enumerate().map(|(g, &e)| (e, sim[g][e])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    const FS: f64 = 50.0;

    fn sine(hz: f64, secs: f64, phase: f64) -> Vec<f64> {
        (0..(secs * FS) as usize).map(|i| (TAU * hz * i as f64 / FS + phase).sin()).collect()
    }

    /// Raised-cosine pulses with 30% duty at the given beat times.
    fn pulses(beats: &[f64], secs: f64, width: f64) -> Vec<f64> {
        (0..(secs * FS) as usize)
            .map(|i| {
                let t = i as f64 / FS;
                beats
                    .iter()
                    .map(|&b| {
                        let u = (t - b) / width;
                        if u.abs() < 0.5 { 0.5 + 0.5 * (TAU * u).cos() } else { 0.0 }
                    })
                    .sum()
            })
            .collect()
    }

    fn white(seed: u64, n: usize) -> Vec<f64> {
        (0..n).map(|i| rng::normal(rng::key(&[seed, 0xABCD, i as u64]))).collect()
    }

    #[test]
    fn sine_rate() {
        let r = estimate_rate(&sine(0.25, 60.0, 0.3), FS, RESP_BAND_BPM).unwrap();
        assert!((r - 15.0).abs() < 0.1, "{r}");
    }

    #[test]
    fn off_grid_rate_is_refined() {
        for f in [0.2137, 0.25, 0.3011] {
            let r = estimate_rate(&sine(f, 60.0, 0.3), FS, RESP_BAND_BPM).unwrap();
            assert!((r - 60.0 * f).abs() < 0.005, "{f}: {r}");
        }
    }

    #[test]
    fn pulse_train_rate() {
        let beats: Vec<f64> = (0..72).map(|k| k as f64 / 1.2).collect();
        let r = estimate_rate(&pulses(&beats, 60.0, 0.3 / 1.2), FS, HEART_BAND_BPM).unwrap();
        assert!((r - 72.0).abs() < 0.5, "{r}");
    }

    #[test]
    fn jittered_rate_matches_peak_oracle() {
        for seed in 0..10u64 {
            // cycles with 5% period jitter, sinusoidal within each cycle
            let mut t0 = 0.0;
            let mut edges = vec![0.0];
            while t0 < 62.0 {
                t0 += 4.0 * (1.0 + 0.05 * rng::normal(rng::key(&[seed, edges.len() as u64])));
                edges.push(t0);
            }
            let x: Vec<f64> = (0..3000)
                .map(|i| {
                    let t = i as f64 / FS;
                    let k = edges.partition_point(|&e| e <= t) - 1;
                    let ph = (t - edges[k]) / (edges[k + 1] - edges[k]);
                    -(TAU * ph).cos()
                })
                .collect();
            // oracle: mean instantaneous rate from the cycle maxima inside the record
            let peaks: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).filter(|&p| p < 60.0).collect();
            let oracle = dsp::mean(&peaks.windows(2).map(|w| 60.0 / (w[1] - w[0])).collect::<Vec<_>>());
            let r = estimate_rate(&x, FS, RESP_BAND_BPM).unwrap();
            assert!((r - oracle).abs() < 0.5, "seed {seed}: {r} vs {oracle}");
        }
    }

    #[test]
    fn rate_errors() {
        assert!(matches!(estimate_rate(&sine(0.25, 10.0, 0.0), FS, RESP_BAND_BPM), Err(VitalsError::TooShort { .. })));
        assert_eq!(estimate_rate(&vec![1.0; 3000], FS, RESP_BAND_BPM), Err(VitalsError::NoRate));
        assert!(estimate_rate(&sine(0.25, 60.0, 0.0), FS, (30.0, 6.0)).is_err());
    }

    proptest! {
        #[test]
        fn rate_ignores_gain_and_offset(hz in 0.15f64..0.45, gain in 0.01f64..100.0, dc in -50.0f64..50.0) {
            let x = sine(hz, 60.0, 0.1);
            let y: Vec<f64> = x.iter().map(|v| gain * v + dc).collect();
            let a = estimate_rate(&x, FS, RESP_BAND_BPM).unwrap();
            let b = estimate_rate(&y, FS, RESP_BAND_BPM).unwrap();
            prop_assert!((a - b).abs() < 1e-6);
        }

        #[test]
        fn cosine_symmetric_and_scale_free(seed in 0u64..500, lag in 0usize..20) {
            let a = white(seed, 300);
            let b = white(seed + 1000, 300);
            let c1 = cosine_similarity(&a, &b, lag).unwrap();
            let c2 = cosine_similarity(&b, &a, lag).unwrap();
            let a2: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
            let c3 = cosine_similarity(&a2, &b, lag).unwrap();
            prop_assert_eq!(c1, c2);
            prop_assert_eq!(c1, c3);
            prop_assert!((-1.0..=1.0).contains(&c1));
        }
    }

    #[test]
    fn sine_has_no_variability() {
        let v = rate_variability(&sine(0.25, 60.0, 0.0), FS).unwrap();
        assert!(v < 1e-3, "{v}");
    }

    #[test]
    fn constructed_intervals() {
        let iv = [1.0, 1.1, 0.9, 1.0, 1.1, 0.9];
        let want = dsp::std(&iv) / dsp::mean(&iv);
        assert_eq!(interval_variability(&iv), want);
        let mut beats = vec![1.0];
        for d in iv {
            beats.push(beats.last().unwrap() + d);
        }
        let fs = 1000.0;
        let x: Vec<f64> = (0..9000)
            .map(|i| {
                let t = i as f64 / fs;
                beats.iter().map(|&b| (-0.5 * ((t - b) / 0.05).powi(2)).exp()).sum()
            })
            .collect();
        let got = rate_variability(&x, fs).unwrap();
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        assert!(matches!(rate_variability(&sine(0.25, 12.0, 0.0), FS), Err(VitalsError::TooFewPeaks(3))));
    }

    #[test]
    fn white_noise_is_irregular() {
        for seed in 0..100 {
            match rate_variability(&white(seed, 3000), FS) {
                Ok(v) => assert!(v > 0.3, "seed {seed}: {v}"),
                Err(_) => {}
            }
        }
    }

    #[test]
    fn classifier_labels() {
        let e = classify_component(&sine(0.25, 60.0, 0.0), FS);
        assert_eq!(e.kind, VitalKind::Respiration);
        assert!((e.rate_bpm.unwrap() - 15.0).abs() < 0.1);
        let beats: Vec<f64> = (0..72).map(|k| k as f64 / 1.2).collect();
        let e = classify_component(&pulses(&beats, 60.0, 0.25), FS);
        assert_eq!(e.kind, VitalKind::Heartbeat);
        assert!((e.rate_bpm.unwrap() - 72.0).abs() < 0.5);
        let noise = (0..100).filter(|&s| classify_component(&white(s, 3000), FS).kind == VitalKind::Noise).count();
        assert!(noise >= 99, "{noise}");
    }

    #[test]
    fn respiration_band_never_heartbeat() {
        for k in 0..60 {
            let hz = 0.1 + 0.4 * k as f64 / 59.0;
            let e = classify_component(&sine(hz, 60.0, 0.2 * k as f64), FS);
            assert_ne!(e.kind, VitalKind::Heartbeat, "{hz}");
        }
    }

    #[test]
    fn cosine_cases() {
        let a = sine(0.5, 20.0, 0.0);
        assert!((cosine_similarity(&a, &a, 0).unwrap() - 1.0).abs() < 1e-12);
        let b = sine(0.5, 20.0, PI / 2.0);
        assert!(cosine_similarity(&a, &b, 0).unwrap().abs() < 1e-6);
        let x = white(3, 1000);
        let shifted: Vec<f64> = x[7..].iter().chain(&x[..7]).copied().collect();
        let c = cosine_similarity(&x, &shifted, 10).unwrap();
        assert!((c - 1.0).abs() < 1e-6, "{c}");
        assert_eq!(cosine_similarity(&vec![1.0; 10], &a, 0), Err(VitalsError::ZeroNorm));
    }

    #[test]
    fn bpm_errors() {
        let (a, r) = bpm_error(16.0, 15.0).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && (r - 0.0667).abs() < 1e-4);
        assert_eq!(bpm_error(15.0, 15.0).unwrap(), (0.0, 0.0));
        assert_eq!(bpm_error(15.0, 0.0), Err(VitalsError::GroundTruth(0.0)));
    }

    #[test]
    fn batch_median_matches_sort_oracle() {
        let errs: Vec<f64> = (0..101)
            .map(|i| bpm_error(15.0 + rng::normal(rng::key(&[4, i])), 15.0).unwrap().0)
            .collect();
        let mut sorted = errs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(dsp::median(&mut errs.clone()), sorted[50]);
    }

    fn est(w: Vec<f64>) -> VitalEstimate {
        VitalEstimate { kind: VitalKind::Noise, rate_bpm: None, waveform: w, fs: FS, variability: None }
    }

    #[test]
    fn matching() {
        let g1 = sine(0.25, 30.0, 0.0);
        let g2 = white(1, 1500);
        assert_eq!(match_components(&[est(g1.clone())], &[g1.clone()], 0).unwrap()[0].0, 0);
        let m = match_components(&[est(g2.clone()), est(g1.clone())], &[g1.clone(), g2.clone()], 0).unwrap();
        assert_eq!(m.iter().map(|p| p.0).collect::<Vec<_>>(), vec![1, 0]);
        assert!(match_components(&[est(g1.clone())], &[g1, g2], 0).is_err());
    }

    #[test]
    fn assignment_matches_brute_force() {
        for seed in 0..200u64 {
            let sim: Vec<Vec<f64>> = (0..3)
                .map(|g| (0..5).map(|e| rng::unit_open(rng::key(&[seed, g, e]))).collect())
                .collect();
            let got = best_assignment(&sim).unwrap();
            let mut best = f64::NEG_INFINITY;
            let mut count = 0;
            for a in 0..5 {
                for b in 0..5 {
                    for c in 0..5 {
                        if a == b || b == c || a == c {
                            continue;
                        }
                        count += 1;
                        best = best.max(sim[0][a] + sim[1][b] + sim[2][c]);
                    }
                }
            }
            assert_eq!(count, 60);
            let score: f64 = got.iter().enumerate().map(|(g, &e)| sim[g][e]).sum();
            assert_eq!(score, best);
        }
    }
}
