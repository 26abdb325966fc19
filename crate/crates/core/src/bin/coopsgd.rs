use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coopsgd::harness::{bounds_only, compare_selection_modes, run_experiment, ExperimentConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_ALL_DIVERGED: u8 = 3;

/// Cooperative SGD simulator.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every sweep point and seed, writing traces and comparison.csv.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (defaults to available cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print bound reports as JSON without simulating.
    Bounds { config: PathBuf },
    /// Compare per-round-random and static-random selection.
    CompareSelection {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    let seed = match std::env::var("COOPSGD_SEED") {
        Ok(s) => match s.trim().parse::<u64>() {
            Ok(v) => Some(v),
            Err(_) => {
                eprintln!("error: COOPSGD_SEED must be an unsigned integer, got {s:?}");
                return Err(ExitCode::from(EXIT_CONFIG));
            }
        },
        Err(_) => None,
    };
    let mut cfg = ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })?;
    cfg.override_seed(seed);
    Ok(cfg)
}

fn fail(e: coopsgd::Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        coopsgd::Error::Config { .. } => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, jobs } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match run_experiment(&cfg, &out, jobs) {
                Ok(outcome) => {
                    let diverged = outcome.records.iter().filter(|r| r.measured.is_none()).count();
                    println!(
                        "{} run(s), {} diverged; results in {}",
                        outcome.records.len(),
                        diverged,
                        outcome.out_dir.display()
                    );
                    if outcome.all_diverged() {
                        ExitCode::from(EXIT_ALL_DIVERGED)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::Bounds { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match bounds_only(&cfg) {
                Ok(reports) => {
                    let json: Vec<_> = reports
                        .into_iter()
                        .map(|(p, r)| serde_json::json!({ "point": p.label(), "report": r }))
                        .collect();
                    println!("{}", serde_json::to_string_pretty(&json).expect("report serializes"));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::CompareSelection { config, out, jobs } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match compare_selection_modes(&cfg, &out, jobs) {
                Ok(cmp) => {
                    for w in &cmp.warnings {
                        eprintln!("warning: {w}");
                    }
                    println!(
                        "median final loss: per-round-random {:.6e}, static-random {:.6e}",
                        cmp.per_round.median_final_loss, cmp.static_random.median_final_loss
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}
