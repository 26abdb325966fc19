//! Mixing matrices: construction, validation, δ and the consensus
//! deviation it bounds, and the JSON exchange format.

use coopsgd::mixing::{
    build_dataset_proportional, build_uniform, consensus_deviation_sq, delta_of, random_column_stochastic, validate,
};
use coopsgd::selection::{select, SelectionSet};
use coopsgd::SelectionPolicy;

fn main() -> coopsgd::Result<()> {
    let m = 6;
    let everyone = SelectionSet::everyone(0, m);
    let j = build_uniform(m, 0, &everyone)?;
    println!("uniform: δ = {}, deviation = {:.3e}", delta_of(&j, 1.0)?, consensus_deviation_sq(j.dense())?);

    let half = select(&SelectionPolicy::per_round_random(0.5, 7), 0, m)?;
    let sizes = [120.0, 80.0, 40.0, 300.0, 60.0, 200.0];
    let prop = build_dataset_proportional(&sizes, &half)?;
    println!(
        "proportional over {:?}: valid = {}, δ = {:.4}, deviation = {:.4}",
        half.members(),
        validate(&prop, 1e-9).is_pass(),
        delta_of(&prop, 0.5)?,
        consensus_deviation_sq(prop.dense())?
    );

    println!("random family, δ against blend towards uniform:");
    let all: Vec<usize> = (0..m).collect();
    for blend in [1.0, 0.5, 0.1, 0.01, 0.0] {
        let w = random_column_stochastic(m, &all, 3, 0, blend)?;
        println!(
            "  blend {blend:<5} δ = {:.6}  deviation = {:.6}",
            delta_of(&w, 1.0)?,
            consensus_deviation_sq(w.dense())?
        );
    }

    let small = build_uniform(2, 0, &SelectionSet::new(0, vec![0], 2)?)?;
    println!("JSON: {}", serde_json::to_string(&small.to_json())?);
    Ok(())
}
