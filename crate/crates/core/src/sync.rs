//! Wireless clock distribution: two-tone CFO cancellation, PLL cleanup and
//! round-trip phase-offset correction.
//!
//! Tones are tracked symbolically: a received tone is its nominal frequency
//! plus the board's CFO plus additive measurement noise.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radar::SPEED_OF_LIGHT;
use crate::rng;
use crate::scene::wrap_angle;

#[derive(Debug, Error, PartialEq)]
pub enum SyncError {
    #[error("derived reference is not positive ({0} Hz)")]
    NonPositiveReference(f64),
    #[error("empty phase series")]
    EmptySeries,
    #[error("sample rate {fs} Hz must exceed twice the loop bandwidth {bw} Hz")]
    Bandwidth { fs: f64, bw: f64 },
    #[error("board {0} is already phase corrected")]
    AlreadyCorrected(usize),
    #[error("coherence report needs at least 2 boards, got {0}")]
    TooFewBoards(usize),
    #[error("tone pair must satisfy f1 > f2 > 0")]
    Tones,
    #[error("invalid clock for board {0}: {1}")]
    Clock(usize, &'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockState {
    pub board: usize,
    /// carrier frequency offset against the server, Hz
    pub delta_f: f64,
    /// propagation-induced phase offset, radians
    pub phase_offset: f64,
    /// per-sample phase noise, radians
    pub jitter_std: f64,
    pub corrected: bool,
    /// std of each received tone's frequency estimate, Hz
    #[serde(default)]
    pub tone_noise_hz: f64,
}

impl ClockState {
    pub fn ideal(board: usize) -> Self {
        Self { board, delta_f: 0.0, phase_offset: 0.0, jitter_std: 0.0, corrected: false, tone_noise_hz: 0.0 }
    }

    pub fn validate(&self) -> Result<(), SyncError> {
        if !(self.jitter_std >= 0.0) {
            return Err(SyncError::Clock(self.board, "jitter_std must be >= 0"));
        }
        if !(self.tone_noise_hz >= 0.0) {
            return Err(SyncError::Clock(self.board, "tone noise must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TonePair {
    pub f1: f64,
    pub f2: f64,
}

impl Default for TonePair {
    /// 343 MHz - 100 MHz = 243 MHz board clock.
    fn default() -> Self {
        Self { f1: 343e6, f2: 100e6 }
    }
}

impl TonePair {
    pub fn validate(&self) -> Result<(), SyncError> {
        if self.f1 > self.f2 && self.f2 > 0.0 {
            Ok(())
        } else {
            Err(SyncError::Tones)
        }
    }

    pub fn reference(&self) -> f64 {
        self.f1 - self.f2
    }
}

/// Tones as seen by a client: both shifted by the client's CFO.
pub fn received_tones(tones: TonePair, clock: &ClockState) -> (f64, f64) {
    (tones.f1 + clock.delta_f, tones.f2 + clock.delta_f)
}

/// Difference-frequency reference clock. The common CFO cancels.
pub fn derive_reference(f1_hat: f64, f2_hat: f64) -> Result<f64, SyncError> {
    let r = f1_hat - f2_hat;
    if r > 0.0 {
        Ok(r)
    } else {
        Err(SyncError::NonPositiveReference(r))
    }
}

/// Smoothing factor of the first-order loop for a given bandwidth.
pub fn pll_alpha(fs: f64, loop_bandwidth: f64) -> f64 {
    1.0 - (-TAU * loop_bandwidth / fs).exp()
}

/// First-order phase-tracking loop: `y[k] = y[k-1] + a (x[k] - y[k-1])`,
/// seeded with the first sample. White input variance is scaled by `a / (2 - a)`.
pub fn pll_cleanup(phase: &[f64], fs: f64, loop_bandwidth: f64) -> Result<Vec<f64>, SyncError> {
    if phase.is_empty() {
        return Err(SyncError::EmptySeries);
    }
    if !(loop_bandwidth > 0.0) || !(fs > 2.0 * loop_bandwidth) {
        return Err(SyncError::Bandwidth { fs, bw: loop_bandwidth });
    }
    let a = pll_alpha(fs, loop_bandwidth);
    let mut y = phase[0];
    Ok(phase
        .iter()
        .map(|&x| {
            y += a * (x - y);
            y
        })
        .collect())
}

/// Subtract an estimated offset; a clock can be corrected once.
pub fn phase_offset_correct(clock: &ClockState, estimated_offset: f64) -> Result<ClockState, SyncError> {
    if clock.corrected {
        return Err(SyncError::AlreadyCorrected(clock.board));
    }
    Ok(ClockState {
        phase_offset: wrap_angle(clock.phase_offset - estimated_offset),
        corrected: true,
        ..clock.clone()
    })
}

/// One-way propagation phase of the reference clock over `distance`.
pub fn propagation_phase(distance_m: f64, reference_hz: f64) -> f64 {
    wrap_angle(TAU * (distance_m * reference_hz / SPEED_OF_LIGHT).fract())
}

/// One-way offset from a round-trip phase measurement. Halving leaves a
/// pi ambiguity, resolved by the branch nearest a coarse time-of-flight phase.
pub fn round_trip_offset(round_trip_phase: f64, coarse_one_way_phase: f64) -> f64 {
    let half = wrap_angle(round_trip_phase) / 2.0;
    let alt = wrap_angle(half + PI);
    if wrap_angle(half - coarse_one_way_phase).abs() <= wrap_angle(alt - coarse_one_way_phase).abs() {
        half
    } else {
        alt
    }
}

/// Measurement noise of the two-way exchange.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundTripNoise {
    /// round-trip phase measurement std, rad
    pub phase_std: f64,
    /// coarse ranging std, m
    pub tof_std_m: f64,
}

impl Default for RoundTripNoise {
    fn default() -> Self {
        Self { phase_std: 0.02, tof_std_m: 0.05 }
    }
}

/// Simulate one exchange over `distance_m` and return the one-way estimate.
pub fn simulate_round_trip(distance_m: f64, reference_hz: f64, noise: RoundTripNoise, key: u64) -> f64 {
    let truth = propagation_phase(distance_m, reference_hz);
    let rt = wrap_angle(2.0 * truth + noise.phase_std * rng::normal(rng::key(&[key, 0])));
    let coarse_d = distance_m + noise.tof_std_m * rng::normal(rng::key(&[key, 1]));
    round_trip_offset(rt, propagation_phase(coarse_d, reference_hz))
}

/// Tone-tracking samples per second in [`coherence_report`].
pub const TONE_SAMPLE_RATE_HZ: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardCoherence {
    pub board_id: usize,
    pub residual_cfo_hz: f64,
    pub phase_offset_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceStats {
    pub median_residual_cfo_hz: f64,
    pub median_abs_phase_rad: f64,
    pub boards: Vec<BoardCoherence>,
}

/// Residual CFO of each board after reference derivation (median absolute
/// deviation from `f1 - f2` over `duration` of noisy tone samples) and its
/// current phase offset; medians taken across boards.
pub fn coherence_report(clocks: &[ClockState], tones: TonePair, duration: f64) -> Result<CoherenceStats, SyncError> {
    if clocks.len() < 2 {
        return Err(SyncError::TooFewBoards(clocks.len()));
    }
    tones.validate()?;
    let target = tones.reference();
    let n = ((duration * TONE_SAMPLE_RATE_HZ).round() as usize).max(1);
    let mut boards = Vec::with_capacity(clocks.len());
    for c in clocks {
        c.validate()?;
        let mut res = Vec::with_capacity(n);
        let (f1, f2) = received_tones(tones, c);
        for k in 0..n {
            let (e1, e2) = if c.tone_noise_hz > 0.0 {
                let base = [c.board as u64, k as u64, c.delta_f.to_bits()];
                (
                    c.tone_noise_hz * rng::normal(rng::key(&[rng::tag::SYNC_TONE, base[0], base[1], base[2], 1])),
                    c.tone_noise_hz * rng::normal(rng::key(&[rng::tag::SYNC_TONE, base[0], base[1], base[2], 2])),
                )
            } else {
                (0.0, 0.0)
            };
            let r = derive_reference(f1 + e1, f2 + e2)?;
            res.push((r - target).abs());
        }
        boards.push(BoardCoherence {
            board_id: c.board,
            residual_cfo_hz: crate::dsp::median(&mut res),
            phase_offset_rad: c.phase_offset,
        })
    }
    let mut cfo: Vec<f64> = boards.iter().map(|b| b.residual_cfo_hz).collect();
    let mut ph: Vec<f64> = boards.iter().map(|b| b.phase_offset_rad.abs()).collect();
    Ok(CoherenceStats {
        median_residual_cfo_hz: crate::dsp::median(&mut cfo),
        median_abs_phase_rad: crate::dsp::median(&mut ph),
        boards,
    })
}

/// Propagation environment of the clock link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkProfile {
    Los,
    Nlos,
}

impl LinkProfile {
    /// Median residual CFO the tone noise is calibrated to, Hz.
    pub fn target_residual_hz(self) -> f64 {
        match self {
            LinkProfile::Los => 0.25,
            LinkProfile::Nlos => 0.30,
        }
    }

    /// Per-tone noise std whose residual `|n1 - n2|` has the target median.
    /// For `n1 - n2 ~ N(0, 2 s^2)` the median magnitude is `0.6745 * sqrt(2) * s`.
    pub fn tone_noise_hz(self) -> f64 {
        self.target_residual_hz() / (0.674_489_750_196_081_7 * std::f64::consts::SQRT_2)
    }

    pub fn jitter_std(self) -> f64 {
        match self {
            LinkProfile::Los => 0.01,
            LinkProfile::Nlos => 0.015,
        }
    }

    pub fn round_trip(self) -> RoundTripNoise {
        match self {
            LinkProfile::Los => RoundTripNoise::default(),
            LinkProfile::Nlos => RoundTripNoise { phase_std: 0.03, tof_std_m: 0.07 },
        }
    }
}

/// Board-to-board spread of tone noise (log-normal sigma).
const TONE_NOISE_SPREAD: f64 = 0.05;
/// Crystal tolerance expressed as CFO std at the tone frequencies, Hz.
const CFO_STD_HZ: f64 = 2_000.0;

/// Synchronize `n_sensing` boards to a server and return their corrected clocks.
///
/// With `server_senses` the server is sensing board 0 (ideal clock); otherwise
/// it is a separate unit and every sensing board is a client.
pub fn establish_clocks(
    profile: LinkProfile,
    n_sensing: usize,
    server_senses: bool,
    tones: TonePair,
    seed: u64,
) -> Vec<ClockState> {
    let fref = tones.reference();
    (0..n_sensing)
        .map(|b| {
            if server_senses && b == 0 {
                return ClockState { corrected: true, ..ClockState::ideal(0) };
            }
            let k = |i: u64| rng::key(&[seed, rng::tag::SYNC_PHASE, b as u64, i]);
            let distance = 1.0 + 5.0 * rng::unit_open(k(0));
            let raw = ClockState {
                board: b,
                delta_f: CFO_STD_HZ * rng::normal(k(1)),
                phase_offset: propagation_phase(distance, fref),
                jitter_std: profile.jitter_std(),
                corrected: false,
                tone_noise_hz: profile.tone_noise_hz() * (TONE_NOISE_SPREAD * rng::normal(k(2))).exp(),
            };
            let est = simulate_round_trip(distance, fref, profile.round_trip(), k(3));
            phase_offset_correct(&raw, est).expect("fresh clock")
        })
        .collect()
}
