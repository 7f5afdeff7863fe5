//! Acceptance criteria 1 to 10. Each test writes one `criterion N PASS|FAIL`
//! line straight to stdout (visible without `--nocapture`) and then asserts.
//!
//! Run with `cargo test --release -p vitalsim --test acceptance`.

use std::f64::consts::TAU;
use std::io::Write;
use std::time::Instant;

use vitalsim::frames::{self, FrameFile, FrameFileError};
use vitalsim::run::{self, Pipeline, ResultRow, Setup};
use vitalsim::scenario;
use vitalsim_core::dsp;
use vitalsim_core::pipeline::checkpoint::{self, CheckpointError};
use vitalsim_core::pipeline::model::Sample;
use vitalsim_core::pipeline::window::select_window_power;
use vitalsim_core::pipeline::{ModelDims, SeparatorModel};
use vitalsim_core::radar::{LayoutName, N_BINS};
use vitalsim_core::rng;
use vitalsim_core::sync::{self, ClockState, LinkProfile, TonePair};
use vitalsim_core::vitals::{self, VitalKind};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn report(n: usize, pass: bool, detail: &str) {
    let line = format!("criterion {n} {}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}

fn median(v: &[f64]) -> f64 {
    dsp::median(&mut v.to_vec())
}

fn resp_rows(rows: &[ResultRow]) -> Vec<&ResultRow> {
    rows.iter().filter(|r| r.kind == VitalKind::Respiration.as_str()).collect()
}

#[test]
fn criterion_01_cfo_cancellation() {
    let tones = TonePair::default();
    let exact = tones.reference();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..100_000u64 {
        let delta_f = -1_000.0 + 2_000.0 * rng::unit_open(rng::key(&[0xC1, i]));
        let clock = ClockState { delta_f, ..ClockState::ideal(1) };
        let (f1, f2) = sync::received_tones(tones, &clock);
        let r = sync::derive_reference(f1, f2).unwrap();
        worst = worst.max((r - exact).abs() / exact);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-9 && secs < 1.0;
    report(1, pass, &format!("worst relative error {worst:.2e} over 1e5 offsets in {secs:.3} s"));
    assert!(pass);
}

fn exhaustive_window(p: &[f64], n: usize) -> usize {
    let sums: Vec<f64> = (0..=p.len() - n).map(|s| p[s..s + n].iter().sum()).collect();
    let max = sums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    sums.iter().position(|&s| s == max).unwrap()
}

#[test]
fn criterion_02_window_oracle() {
    let start = Instant::now();
    let mut mismatches = 0;
    let mut tied = 0;
    for case in 0..1000u64 {
        let n = 1 + (rng::mix64(rng::key(&[0xC2, case])) % 60) as usize;
        // half the profiles are small integers so equal window sums are common
        let p: Vec<f64> = (0..N_BINS)
            .map(|b| {
                let k = rng::key(&[0xC2, case, b as u64]);
                if case % 2 == 0 {
                    (rng::mix64(k) % 3) as f64
                } else {
                    rng::unit_open(k)
                }
            })
            .collect();
        let want = exhaustive_window(&p, n);
        let sums: Vec<f64> = (0..=p.len() - n).map(|s| p[s..s + n].iter().sum()).collect();
        if sums.iter().filter(|&&s| s == sums[want]).count() > 1 {
            tied += 1;
        }
        if select_window_power(&p, n).unwrap() != want {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = mismatches == 0 && tied > 0 && secs < 1.0;
    report(2, pass, &format!("{mismatches} mismatches in 1000 profiles ({tied} with tied maxima), {secs:.3} s"));
    assert!(pass);
}

#[test]
fn criterion_03_gradient_check() {
    let dims = ModelDims { heads: 2, receivers: 4, window: 6, d_k: 4, hidden: vec![24, 12, 4] };
    let mut m = SeparatorModel::init(dims, 1.0, 3).unwrap();
    for (i, p) in m.params.iter_mut().enumerate() {
        *p = 0.4 * rng::normal(rng::key(&[0xC3, i as u64]));
    }
    let n_in = m.dims.receivers * m.dims.input_dim();
    let xs: Vec<Vec<f64>> =
        (0..6u64).map(|s| (0..n_in).map(|i| rng::normal(rng::key(&[0xC3, 1, s, i as u64]))).collect()).collect();
    let batch: Vec<Sample> = xs.iter().enumerate().map(|(i, x)| Sample { inputs: x, label: (i % 2) as f64 }).collect();
    let start = Instant::now();
    let (_, g) = m.gradients(&batch).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..m.n_params() {
        let orig = m.params[i];
        m.params[i] = orig + h;
        let up = m.loss(&batch).unwrap();
        m.params[i] = orig - h;
        let dn = m.loss(&batch).unwrap();
        m.params[i] = orig;
        let num = (up - dn) / (2.0 * h);
        // gradients below 1e-6 are compared absolutely
        let rel = (num - g[i]).abs() / num.abs().max(g[i].abs()).max(1e-6);
        worst = worst.max(rel);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = m.n_params() <= 2000 && worst < 1e-4 && secs < 30.0;
    report(3, pass, &format!("{} parameters, worst relative error {worst:.2e}, {secs:.2} s", m.n_params()));
    assert!(pass);
}

#[test]
fn criterion_04_single_subject_recovery() {
    let start = Instant::now();
    let pipe = Pipeline::default();
    let mut good = 0;
    let mut detail = Vec::new();
    for seed in SEEDS {
        let setup = Setup::new(scenario::multi(1, seed).unwrap(), LayoutName::Four4x4);
        let out = run::run(&setup, seed, &pipe, "c4").unwrap();
        let r = resp_rows(&out.rows)[0];
        let ok = r.cosine >= 0.90 && r.error_or_inf() <= 1.0;
        good += ok as usize;
        detail.push(format!("s{seed} cos {:.3} err {:.3}", r.cosine, r.abs_err));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = good >= 4 && secs <= 600.0;
    report(4, pass, &format!("{good}/5 seeds with cos >= 0.90 and err <= 1.0 bpm [{}], {secs:.0} s", detail.join("; ")));
    assert!(pass);
}

fn median_error(setup_for: impl Fn(u64) -> Setup, pipe: &Pipeline) -> f64 {
    let errs: Vec<f64> = SEEDS
        .iter()
        .map(|&seed| {
            let out = run::run(&setup_for(seed), seed, pipe, "c5").unwrap();
            resp_rows(&out.rows)[0].error_or_inf()
        })
        .collect();
    median(&errs)
}

#[test]
fn criterion_05_diversity_vs_snr() {
    let pipe = Pipeline::default();
    let los = |layout| move |seed| Setup::new(scenario::los_at(1.0, seed).unwrap(), layout);
    let los_one = median_error(los(LayoutName::One16x16), &pipe);
    let los_four = median_error(los(LayoutName::Four4x4), &pipe);
    let nlos = |layout| {
        move |seed| {
            let mut s = Setup::new(scenario::nlos(seed).unwrap(), layout);
            s.sync = LinkProfile::Nlos;
            s
        }
    };
    let nlos_one = median_error(nlos(LayoutName::One16x16), &pipe);
    let nlos_four = median_error(nlos(LayoutName::Four4x4), &pipe);
    let nlos_sixteen = median_error(nlos(LayoutName::Sixteen1x1), &pipe);
    let pass = los_one <= los_four && nlos_four < nlos_one && nlos_four < nlos_sixteen;
    report(
        5,
        pass,
        &format!(
            "median err LoS 1 m one16x16 {los_one:.4} vs four4x4 {los_four:.4}; NLoS 5 m four4x4 {nlos_four:.3} vs one16x16 {nlos_one:.3}, sixteen1x1 {nlos_sixteen:.3}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_attention_blockage() {
    let pipe = Pipeline::default();
    let mut per_board = Vec::new();
    for b in 0..4 {
        let mut hits = 0;
        for seed in SEEDS {
            let setup = Setup::new(scenario::blocked(b, seed).unwrap(), LayoutName::Four4x4);
            let att = run::run(&setup, seed, &pipe, "c6").unwrap().attention;
            let strictly_min = (0..att.len()).filter(|&o| o != b).all(|o| att[b] < att[o]);
            hits += strictly_min as usize;
        }
        per_board.push(hits);
    }
    let pass = per_board.iter().all(|&h| h >= 4);
    let detail: Vec<String> = per_board.iter().enumerate().map(|(b, h)| format!("board {b} {h}/5")).collect();
    report(6, pass, &format!("blocked board has the strictly smallest weight: {}", detail.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_07_two_subjects() {
    let pipe = Pipeline::default();
    let (a, b) = (scenario::SEATS[0], scenario::SEATS[1]);
    let spacing = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let mut good = 0;
    let mut detail = Vec::new();
    for seed in SEEDS {
        let setup = Setup::new(scenario::multi(2, seed).unwrap(), LayoutName::Four4x4);
        let out = run::run(&setup, seed, &pipe, "c7").unwrap();
        let rows = resp_rows(&out.rows);
        let ok = rows.len() == 2 && rows.iter().all(|r| r.cosine >= 0.85 && r.error_or_inf() <= 1.5);
        good += ok as usize;
        let each: Vec<String> = rows.iter().map(|r| format!("cos {:.3} err {:.3}", r.cosine, r.abs_err)).collect();
        detail.push(format!("s{seed} {}", each.join(" / ")));
    }
    let pass = spacing >= 1.5 && good >= 4;
    report(7, pass, &format!("{good}/5 seeds, subjects {spacing:.2} m apart [{}]", detail.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_08_sync_statistics() {
    let mut detail = Vec::new();
    let mut pass = true;
    for profile in [LinkProfile::Los, LinkProfile::Nlos] {
        let clocks = sync::establish_clocks(profile, 100, false, TonePair::default(), 1);
        let stats = sync::coherence_report(&clocks, TonePair::default(), 1.0).unwrap();
        let target = profile.target_residual_hz();
        let m = stats.median_residual_cfo_hz;
        pass &= (m - target).abs() <= 0.1 * target;
        detail.push(format!("{profile:?} median {m:.4} Hz (target {target})"));
    }
    report(8, pass, &format!("100 boards: {}", detail.join(", ")));
    assert!(pass);
}

const FS: f64 = 50.0;
const SECS: f64 = 60.0;

fn samples() -> usize {
    (SECS * FS) as usize
}

fn resp_wave(i: u64) -> (Vec<f64>, f64) {
    let bpm = 8.0 + 20.0 * rng::unit_open(rng::key(&[0xC9, 1, i]));
    let phase = TAU * rng::unit_open(rng::key(&[0xC9, 2, i]));
    let w = (0..samples()).map(|k| (TAU * bpm / 60.0 * k as f64 / FS + phase).sin()).collect();
    (w, bpm)
}

fn heart_wave(i: u64) -> (Vec<f64>, f64) {
    let bpm = 50.0 + 100.0 * rng::unit_open(rng::key(&[0xC9, 3, i]));
    let period = 60.0 / bpm;
    let first = period * rng::unit_open(rng::key(&[0xC9, 4, i]));
    let width = 0.3 * period;
    let w = (0..samples())
        .map(|k| {
            let t = k as f64 / FS;
            // raised-cosine pulse centered on the nearest beat
            let u = ((t - first) / period - ((t - first) / period).round()) * period / width;
            if u.abs() < 0.5 {
                0.5 + 0.5 * (TAU * u).cos()
            } else {
                0.0
            }
        })
        .collect();
    (w, bpm)
}

#[test]
fn criterion_09_classifier() {
    let mut correct = 0;
    let mut resp_as_heart = 0;
    for i in 0..100u64 {
        let (w, _) = resp_wave(i);
        let kind = vitals::classify_component(&w, FS).kind;
        correct += (kind == VitalKind::Respiration) as usize;
        resp_as_heart += (kind == VitalKind::Heartbeat) as usize;
        let (w, _) = heart_wave(i);
        correct += (vitals::classify_component(&w, FS).kind == VitalKind::Heartbeat) as usize;
        let noise: Vec<f64> = (0..samples()).map(|k| rng::normal(rng::key(&[0xC9, 5, i, k as u64]))).collect();
        correct += (vitals::classify_component(&noise, FS).kind == VitalKind::Noise) as usize;
    }
    let pass = correct >= 297 && resp_as_heart == 0;
    report(9, pass, &format!("{correct}/300 labels correct, {resp_as_heart} respiration inputs labeled heartbeat"));
    assert!(pass);
}

#[test]
fn criterion_10_persistence() {
    let mut setup = Setup::new(scenario::multi(1, 1).unwrap(), LayoutName::Four4x4);
    setup.duration_s = 2.0;
    let sim = run::simulate(&setup, 1).unwrap();
    let file = FrameFile::new(setup.radar.fps, sim.frames).unwrap();
    let mut bytes = Vec::new();
    frames::write(&file, &mut bytes).unwrap();
    let back = frames::read(bytes.as_slice()).unwrap();
    let bits = |f: &FrameFile| -> Vec<u32> {
        f.frames.iter().flat_map(|fr| fr.bins.iter().flat_map(|c| [c.re.to_bits(), c.im.to_bits()])).collect()
    };
    let times = |f: &FrameFile| -> Vec<u64> { f.frames.iter().map(|fr| fr.t.to_bits()).collect() };
    let mut again = Vec::new();
    frames::write(&back, &mut again).unwrap();
    let frames_exact = bits(&back) == bits(&file) && times(&back) == times(&file) && again == bytes;

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    let mut bad_version = bytes.clone();
    bad_version[4] = 9;
    let mut trailing = bytes.clone();
    trailing.push(0);
    let frame_errors = [
        matches!(frames::read(bad_magic.as_slice()), Err(FrameFileError::BadMagic)),
        matches!(frames::read(bad_version.as_slice()), Err(FrameFileError::BadVersion(9))),
        matches!(frames::read(&bytes[..10]), Err(FrameFileError::TruncatedHeader)),
        matches!(frames::read(&bytes[..bytes.len() - 5]), Err(FrameFileError::Truncated(k)) if k + 1 == file.frames.len()),
        matches!(frames::read(trailing.as_slice()), Err(FrameFileError::Trailing)),
    ];

    let dims = ModelDims { heads: 8, receivers: 16, window: 30, d_k: 4, hidden: vec![64, 32, 8] };
    let model = SeparatorModel::init(dims, 2.0, 7).unwrap();
    let ck = checkpoint::to_bytes(&model);
    let loaded = checkpoint::from_bytes(&ck).unwrap();
    let params_exact = loaded.params.iter().map(|p| p.to_bits()).eq(model.params.iter().map(|p| p.to_bits()));
    let model_exact = params_exact && loaded.dims == model.dims && loaded.lag_s.to_bits() == model.lag_s.to_bits()
        && checkpoint::to_bytes(&loaded) == ck;

    let mut ck_magic = ck.clone();
    ck_magic[1] = b'?';
    let mut ck_version = ck.clone();
    ck_version[4] = 2;
    let mut ck_trailing = ck.clone();
    ck_trailing.extend_from_slice(&[0; 8]);
    let ck_errors = [
        matches!(checkpoint::from_bytes(&ck_magic), Err(CheckpointError::BadMagic)),
        matches!(checkpoint::from_bytes(&ck_version), Err(CheckpointError::BadVersion(2))),
        matches!(checkpoint::from_bytes(&ck[..ck.len() - 3]), Err(CheckpointError::Truncated("parameters"))),
        matches!(checkpoint::from_bytes(&ck_trailing), Err(CheckpointError::Trailing)),
    ];

    let pass = frames_exact && model_exact && frame_errors.iter().all(|&b| b) && ck_errors.iter().all(|&b| b);
    report(
        10,
        pass,
        &format!(
            "frames bit-exact {frames_exact}, checkpoint bit-exact {model_exact}, frame errors {:?}, checkpoint errors {:?}",
            frame_errors, ck_errors
        ),
    );
    assert!(pass);
}
