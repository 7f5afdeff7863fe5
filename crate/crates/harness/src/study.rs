//! Scripted experiment suite. Every study runs its seeds in order and writes
//! a results CSV and a summary JSON.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use vitalsim_core::dsp;
use vitalsim_core::radar::LayoutName;
use vitalsim_core::sync::{self, LinkProfile, TonePair};

use crate::run::{self, apply, run, EvalOptions, Pipeline, ResultRow, RunError, Setup};
use crate::scenario;

pub const STUDIES: [&str; 8] =
    ["config_sweep", "nlos", "mobility", "attention_block", "multi_subject", "generalization", "sync_bench", "heart_distance"];

pub const SWEEP_DISTANCES_M: [f64; 3] = [1.0, 3.0, 5.0];
pub const HEART_DISTANCES_M: [f64; 6] = [0.5, 1.0, 2.0, 3.0, 4.0, 5.0];
/// distance of the training scene in the generalization study
pub const TRAIN_SCENE_DISTANCE_M: f64 = 2.0;
pub const SYNC_BENCH_BOARDS: usize = 100;
/// tone observation time per board in the sync bench, s
pub const SYNC_BENCH_DURATION_S: f64 = 1.0;

const NLOS_LAYOUTS: [LayoutName; 3] = [LayoutName::One16x16, LayoutName::Four4x4, LayoutName::Sixteen1x1];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudyOptions {
    /// subjects in multi_subject
    pub subjects: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self { subjects: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub condition: String,
    pub layout: String,
    pub seed: u64,
    pub subject_id: usize,
    pub kind: String,
    pub rate_bpm: f64,
    pub gt_bpm: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionRow {
    pub run_id: String,
    pub seed: u64,
    pub blocked_board: usize,
    pub board: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncRow {
    pub profile: String,
    pub board_id: usize,
    pub residual_cfo_hz: f64,
    pub phase_offset_rad: f64,
}

/// Aggregate over seeds for one (condition, layout, kind).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Group {
    pub condition: String,
    pub layout: String,
    pub kind: String,
    pub n: usize,
    /// runs whose rate estimate failed
    pub failures: usize,
    pub median_abs_err: f64,
    pub iqr_abs_err: f64,
    pub median_cosine: f64,
    pub iqr_cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub study: String,
    pub seeds: Vec<u64>,
    pub groups: Vec<Group>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sync: Option<Vec<SyncSummary>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncSummary {
    pub profile: String,
    pub boards: usize,
    pub median_residual_cfo_hz: f64,
    pub iqr_residual_cfo_hz: f64,
    pub median_abs_phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub attention: Vec<AttentionRow>,
    pub sync: Vec<SyncRow>,
}

pub fn check_name(name: &str) -> Result<(), RunError> {
    if STUDIES.contains(&name) {
        Ok(())
    } else {
        Err(RunError::Input(format!("unknown study {name:?}; available: {}", STUDIES.join(", "))))
    }
}

fn push(report: &mut StudyReport, condition: &str, layout: LayoutName, seed: u64, rows: Vec<ResultRow>) {
    report.rows.extend(rows.into_iter().map(|r| StudyRow {
        condition: condition.to_string(),
        layout: layout.to_string(),
        seed,
        subject_id: r.subject_id,
        kind: r.kind,
        rate_bpm: r.rate_bpm,
        gt_bpm: r.gt_bpm,
        abs_err: r.abs_err,
        rel_err: r.rel_err,
        cosine: r.cosine,
    }));
}

fn run_id(condition: &str, layout: LayoutName, seed: u64) -> String {
    format!("{condition}/{layout}/s{seed}")
}

fn one(
    report: &mut StudyReport,
    condition: &str,
    setup: &Setup,
    seed: u64,
    pipe: &Pipeline,
) -> Result<run::Outcome, RunError> {
    let out = run(setup, seed, pipe, &run_id(condition, setup.layout, seed))?;
    push(report, condition, setup.layout, seed, out.rows.clone());
    Ok(out)
}

/// Run study `name` over `seeds` and return its rows (unsorted order is the
/// run order, which is already deterministic).
pub fn run_study(name: &str, seeds: &[u64], opts: StudyOptions) -> Result<StudyReport, RunError> {
    check_name(name)?;
    if seeds.is_empty() {
        return Err(RunError::Input("no seeds".into()));
    }
    let pipe = Pipeline::default();
    let mut report = StudyReport::default();
    match name {
        "config_sweep" => {
            for &seed in seeds {
                for d in SWEEP_DISTANCES_M {
                    let cond = format!("los_{d}m");
                    for layout in LayoutName::ALL {
                        one(&mut report, &cond, &Setup::new(scenario::los_at(d, seed)?, layout), seed, &pipe)?;
                    }
                }
            }
        }
        "nlos" => {
            for &seed in seeds {
                for layout in NLOS_LAYOUTS {
                    let d = scenario::NLOS_DISTANCE_M;
                    one(&mut report, &format!("los_{d}m"), &Setup::new(scenario::los_at(d, seed)?, layout), seed, &pipe)?;
                    let mut setup = Setup::new(scenario::nlos(seed)?, layout);
                    setup.sync = LinkProfile::Nlos;
                    one(&mut report, &format!("nlos_{d}m"), &setup, seed, &pipe)?;
                }
            }
        }
        "mobility" => {
            for &seed in seeds {
                for layout in [LayoutName::One16x16, LayoutName::Four4x4] {
                    one(&mut report, "pacing", &Setup::new(scenario::pacing(seed)?, layout), seed, &pipe)?;
                }
            }
        }
        "attention_block" => {
            for &seed in seeds {
                for b in 0..4 {
                    let cond = format!("blocked_{b}");
                    let setup = Setup::new(scenario::blocked(b, seed)?, LayoutName::Four4x4);
                    let out = one(&mut report, &cond, &setup, seed, &pipe)?;
                    let id = run_id(&cond, setup.layout, seed);
                    report.attention.extend(out.attention.iter().enumerate().map(|(board, &weight)| AttentionRow {
                        run_id: id.clone(),
                        seed,
                        blocked_board: b,
                        board,
                        weight,
                    }));
                }
            }
        }
        "multi_subject" => {
            let n = opts.subjects;
            if n == 0 || n > scenario::SEATS.len() {
                return Err(RunError::Input(format!("subjects must be in 1..={}", scenario::SEATS.len())));
            }
            for &seed in seeds {
                let setup = Setup::new(scenario::multi(n, seed)?, LayoutName::Four4x4);
                one(&mut report, &format!("subjects_{n}"), &setup, seed, &pipe)?;
            }
        }
        "generalization" => {
            for &seed in seeds {
                let layout = LayoutName::Four4x4;
                let train = Setup::new(scenario::los_at(TRAIN_SCENE_DISTANCE_M, seed)?, layout);
                let out = one(&mut report, "trained_scene", &train, seed, &pipe)?;
                let test = Setup::new(scenario::unseen(seed)?, layout);
                let sim = run::simulate(&test, seed)?;
                let rows = apply(&out.model, &sim, &pipe, &run_id("unseen_scene", layout, seed))?;
                push(&mut report, "unseen_scene", layout, seed, rows);
            }
        }
        "sync_bench" => {
            for &seed in seeds {
                for profile in [LinkProfile::Los, LinkProfile::Nlos] {
                    report.sync.extend(sync_bench(profile, seed)?);
                }
            }
        }
        "heart_distance" => {
            let pipe = Pipeline { eval: EvalOptions { heart: true }, ..Pipeline::default() };
            for &seed in seeds {
                for d in HEART_DISTANCES_M {
                    let setup = Setup::new(scenario::los_at(d, seed)?, LayoutName::Four4x4);
                    one(&mut report, &format!("los_{d}m"), &setup, seed, &pipe)?;
                }
            }
        }
        _ => unreachable!("checked above"),
    }
    sort_rows(&mut report);
    Ok(report)
}

/// Coherence of [`SYNC_BENCH_BOARDS`] freshly synchronized boards.
pub fn sync_bench(profile: LinkProfile, seed: u64) -> Result<Vec<SyncRow>, RunError> {
    let clocks = sync::establish_clocks(profile, SYNC_BENCH_BOARDS, false, TonePair::default(), seed);
    let stats = sync::coherence_report(&clocks, TonePair::default(), SYNC_BENCH_DURATION_S)?;
    let name = profile_name(profile);
    Ok(stats
        .boards
        .into_iter()
        .map(|b| SyncRow {
            profile: name.to_string(),
            board_id: b.board_id,
            residual_cfo_hz: b.residual_cfo_hz,
            phase_offset_rad: b.phase_offset_rad,
        })
        .collect())
}

fn profile_name(p: LinkProfile) -> &'static str {
    match p {
        LinkProfile::Los => "los",
        LinkProfile::Nlos => "nlos",
    }
}

fn sort_rows(report: &mut StudyReport) {
    report.rows.sort_by(|a, b| {
        (&a.condition, &a.layout, a.seed, a.subject_id, &a.kind).cmp(&(&b.condition, &b.layout, b.seed, b.subject_id, &b.kind))
    });
    report.attention.sort_by(|a, b| (a.seed, a.blocked_board, a.board).cmp(&(b.seed, b.blocked_board, b.board)));
    // sync rows keep profile order, then board order
}

/// Median and IQR per (condition, layout, kind). Failed estimates count as
/// infinite error.
pub fn summarize(name: &str, seeds: &[u64], report: &StudyReport) -> Summary {
    let mut groups: BTreeMap<(String, String, String), Vec<&StudyRow>> = BTreeMap::new();
    for r in &report.rows {
        groups.entry((r.condition.clone(), r.layout.clone(), r.kind.clone())).or_default().push(r);
    }
    let groups = groups
        .into_iter()
        .map(|((condition, layout, kind), rows)| {
            let mut err: Vec<f64> =
                rows.iter().map(|r| if r.abs_err.is_finite() { r.abs_err } else { f64::INFINITY }).collect();
            let mut cos: Vec<f64> = rows.iter().map(|r| r.cosine).collect();
            Group {
                condition,
                layout,
                kind,
                n: rows.len(),
                failures: rows.iter().filter(|r| !r.abs_err.is_finite()).count(),
                median_abs_err: dsp::median(&mut err),
                iqr_abs_err: dsp::iqr(&err),
                median_cosine: dsp::median(&mut cos),
                iqr_cosine: dsp::iqr(&cos),
            }
        })
        .collect();
    let sync = (!report.sync.is_empty()).then(|| {
        ["los", "nlos"]
            .iter()
            .filter_map(|&p| {
                let rows: Vec<&SyncRow> = report.sync.iter().filter(|r| r.profile == p).collect();
                if rows.is_empty() {
                    return None;
                }
                let mut cfo: Vec<f64> = rows.iter().map(|r| r.residual_cfo_hz).collect();
                let mut ph: Vec<f64> = rows.iter().map(|r| r.phase_offset_rad.abs()).collect();
                Some(SyncSummary {
                    profile: p.to_string(),
                    boards: rows.len(),
                    median_residual_cfo_hz: dsp::median(&mut cfo),
                    iqr_residual_cfo_hz: dsp::iqr(&cfo),
                    median_abs_phase_rad: dsp::median(&mut ph),
                })
            })
            .collect()
    });
    Summary { study: name.to_string(), seeds: seeds.to_vec(), groups, sync }
}

/// Write `<name>.csv`, `<name>.summary.json` and, when present,
/// `<name>.attention.csv` / `<name>.sync.csv` into `dir`. Returns the paths.
pub fn write_outputs(dir: &Path, name: &str, seeds: &[u64], report: &StudyReport) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if !report.rows.is_empty() || report.sync.is_empty() {
        written.push(write_csv(&dir.join(format!("{name}.csv")), &report.rows)?);
    }
    if !report.attention.is_empty() {
        written.push(write_csv(&dir.join(format!("{name}.attention.csv")), &report.attention)?);
    }
    if !report.sync.is_empty() {
        written.push(write_csv(&dir.join(format!("{name}.sync.csv")), &report.sync)?);
    }
    let path = dir.join(format!("{name}.summary.json"));
    fs::write(&path, serde_json::to_string_pretty(&summarize(name, seeds, report))? + "\n")?;
    written.push(path);
    Ok(written)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<PathBuf, RunError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

/// Parse `1..5` (inclusive), `3` or `1,4,9`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, RunError> {
    let bad = || RunError::Input(format!("bad seed list {text:?}; use 1..5 or 1,2,3"));
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if b < a {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}
