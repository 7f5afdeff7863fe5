use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use vitalsim::commands;
use vitalsim::run::RunError;
use vitalsim::study;
use vitalsim_core::sync::LinkProfile;

#[derive(Parser)]
#[command(name = "vitalsim", version, about = "Distributed UWB radar vital-sign simulator and separation pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a recording; the ground truth goes to <out>.gt.json
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// defaults to the first seed of the config
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a separator on a recording and write a checkpoint
    Train {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        iters: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Extract components with a trained model and score them
    Eval {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// also score heart rate
        #[arg(long)]
        heart: bool,
    },
    /// Residual CFO and phase offset over 100 synchronized boards
    SyncBench {
        #[arg(long, value_enum)]
        profile: Profile,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// per-board CSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scripted study
    Study {
        #[arg(long)]
        name: String,
        /// `1..5` or `1,2,3`
        #[arg(long, default_value = "1..5")]
        seeds: String,
        #[arg(long, default_value_t = 2)]
        subjects: usize,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Los,
    Nlos,
}

fn exec(cmd: Cmd) -> Result<(), RunError> {
    match cmd {
        Cmd::Simulate { config, out, seed } => {
            let gt = commands::simulate(&config, &out, seed)?;
            println!("wrote {} and {}", out.display(), gt.display());
        }
        Cmd::Train { frames, out, iters, seed } => {
            let t = commands::train(&frames, &out, iters, seed)?;
            println!("loss {:.4} -> {:.4}; wrote {}", t.initial_loss, t.final_loss, out.display());
        }
        Cmd::Eval { frames, model, gt, out, heart } => {
            let rows = commands::eval(&frames, &model, &gt, heart)?;
            study::write_csv(&out, &rows)?;
            for r in &rows {
                println!(
                    "subject {} {}: {:.2} bpm (truth {:.2}), cosine {:.3}",
                    r.subject_id, r.kind, r.rate_bpm, r.gt_bpm, r.cosine
                );
            }
        }
        Cmd::SyncBench { profile, seed, out } => {
            let profile = match profile {
                Profile::Los => LinkProfile::Los,
                Profile::Nlos => LinkProfile::Nlos,
            };
            let s = commands::sync_bench(profile, seed, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Cmd::Study { name, seeds, subjects, out } => {
            for p in commands::study(&name, &seeds, subjects, &out)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match exec(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
