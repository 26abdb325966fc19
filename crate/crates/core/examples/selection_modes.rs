//! Per-round versus one-time random client selection on non-IID data.

use std::path::PathBuf;

use coopsgd::harness::{compare_selection_modes, ExperimentConfig};

fn main() -> coopsgd::Result<()> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/noniid_logistic.toml")
    });
    let cfg = ExperimentConfig::load(&path)?;
    let out = std::env::temp_dir().join("coopsgd-selection");
    let cmp = compare_selection_modes(&cfg, &out, None)?;
    for w in &cmp.warnings {
        eprintln!("warning: {w}");
    }
    for mode in [&cmp.per_round, &cmp.static_random] {
        println!("{:?}: median final loss {:.5} over {:?}", mode.kind, mode.median_final_loss, mode.final_losses);
    }
    println!("per-round selection not worse: {}", cmp.per_round_not_worse());
    Ok(())
}
