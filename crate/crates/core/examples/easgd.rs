//! Elastic averaging on a scalar two-client problem, stepped one iteration
//! at a time.

use coopsgd::{Algorithm, DenseMatrix, Engine, QuadraticSuite, RunConfig};

fn main() -> coopsgd::Result<()> {
    let q = QuadraticSuite::from_parts(DenseMatrix::identity(1), vec![vec![1.0], vec![3.0]], 0.0)?;
    let mut cfg = RunConfig::new(Algorithm::Easgd, 0.1, 2, 8);
    cfg.easgd_alpha = 0.25;

    let mut engine = Engine::new(&cfg, &q)?;
    println!("k   x1         x2         z");
    while !engine.is_done() {
        let k = engine.iteration();
        let aggregated = engine.advance()?.aggregated;
        let s = engine.state();
        println!(
            "{k:<3} {:<10.6} {:<10.6} {:<10.6}{}",
            s.column(0)[0],
            s.column(1)[0],
            s.column(2)[0],
            if aggregated { "  (elastic pull)" } else { "" }
        );
    }
    Ok(())
}
