//! Decentralized SGD with a fixed ring gossip matrix read from JSON,
//! comparing the measured metric to the bound.

use std::path::PathBuf;

use coopsgd::harness::{run_experiment, ExperimentConfig};

fn main() -> coopsgd::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/gossip_ring.toml");
    let cfg = ExperimentConfig::load(&path)?;
    let out = std::env::temp_dir().join("coopsgd-gossip-ring");
    for r in run_experiment(&cfg, &out, Some(2))?.records {
        println!(
            "seed {}: measured {:.4e}, {:?} bound {:.4e}, flags {:?}, satisfied {:?}",
            r.seed,
            r.measured.unwrap_or(f64::NAN),
            r.bound_kind,
            r.bound,
            r.flags,
            r.satisfied
        );
    }
    Ok(())
}
