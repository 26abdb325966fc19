//! Client selection policies and zeroing of unselected columns.

use coopsgd::selection::{select, zero_unselected};
use coopsgd::{SelectionPolicy, StateMatrix};

fn main() -> coopsgd::Result<()> {
    let m = 10;
    let per_round = SelectionPolicy::per_round_random(0.3, 42);
    let fixed = SelectionPolicy::static_random(0.3, 42);
    for round in 0..4 {
        println!(
            "round {round}: per-round {:?}   static {:?}",
            select(&per_round, round, m)?.members(),
            select(&fixed, round, m)?.members()
        );
    }

    let x = StateMatrix::from_columns(4, 0, (0..4).map(|i| vec![i as f64 + 1.0; 2]).collect())?;
    let g = x.clone();
    let sel = select(&SelectionPolicy::per_round_random(0.5, 1), 0, 4)?;
    let (xz, _) = zero_unselected(&x, &g, &sel);
    println!("selected {:?} → columns {:?}", sel.members(), xz.columns());
    Ok(())
}
