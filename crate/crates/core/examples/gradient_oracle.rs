//! Synthetic objectives: a shared-Hessian quadratic with exact σ and κ, and
//! a Dirichlet-partitioned logistic regression.

use coopsgd::objectives::{make_quadratic, LogisticSpec, LogisticSuite, Partition};
use coopsgd::Objective;

fn main() -> coopsgd::Result<()> {
    let d = 8;
    let spectrum: Vec<f64> = (0..d).map(|i| 0.1 + 0.9 * i as f64 / (d - 1) as f64).collect();
    let q = make_quadratic(d, 5, &spectrum, 0.5, 1)?.with_sigma(0.2);
    let x = vec![0.3; d];
    println!("quadratic: L = {:.4}, κ² = {:?}, F_inf = {:?}", q.smoothness(), q.kappa_sq(), q.f_inf());
    println!("  dissimilarity at x = {:.6}", q.dissimilarity_at(&x));
    println!("  Monte Carlo noise variance = {:.5} (σ² = 0.04)", q.noise_variance_at(9, &x, 5000));

    for alpha in [0.1, 0.6, 10.0] {
        let spec = LogisticSpec {
            dim: 5,
            clients: 6,
            samples: 1200,
            partition: Partition::Dirichlet { alpha },
            batch: 16,
            ridge: 1e-3,
            separation: 2.0,
            seed: 4,
        };
        let suite = LogisticSuite::generate(&spec)?;
        println!("logistic, Dirichlet α = {alpha}: label counts per client {:?}", suite.label_counts());
    }
    Ok(())
}
