//! Runs a communication-period sweep from a config file and prints the
//! comparison table. Pass a config path to use your own.

use std::path::PathBuf;

use coopsgd::harness::{run_experiment, ExperimentConfig};

fn main() -> coopsgd::Result<()> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/tau_sweep.toml")
    });
    let cfg = ExperimentConfig::load(&path)?;
    let out = std::env::temp_dir().join("coopsgd-tau-sweep");
    let outcome = run_experiment(&cfg, &out, None)?;

    println!("{:>5} {:>5} {:>14} {:>12} {:>12}", "tau", "seed", "mean ‖∇F‖²", "final loss", "bound");
    for r in &outcome.records {
        println!(
            "{:>5} {:>5} {:>14.5e} {:>12.6} {:>12.4e}",
            r.config.tau,
            r.seed,
            r.measured.unwrap_or(f64::NAN),
            r.final_loss.unwrap_or(f64::NAN),
            r.bound
        );
    }
    println!("outputs in {}", out.display());
    Ok(())
}
