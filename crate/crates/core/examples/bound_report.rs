//! Error bounds and validity conditions for a configuration, plus the
//! learning-rate recipe and the ς-vs-τ comparison.

use coopsgd::bounds::{corollary1_lr, report, sigma_comparison_term, BoundInputs};

fn main() -> coopsgd::Result<()> {
    let inputs = BoundInputs {
        l: 1.0,
        sigma: 0.1,
        kappa: 0.5,
        f_u1: 1.2,
        f_inf: 0.0,
        eta: 0.4,
        k: 1000,
        tau: 10,
        c: 0.5,
        m: 10,
        v: 0,
        delta: 1e-7,
        x1_frob_sq: 4.0,
    };
    let r = report(&inputs)?;
    println!("{}", serde_json::to_string_pretty(&r)?);

    let rec = corollary1_lr(1.0, 0.5, 10, 0, 1000);
    println!("recommended η = {:.5} (K condition met: {})", rec.eta, rec.k_ok);

    for (varsigma, tau) in [(0.2, 2), (0.5, 4), (0.9, 10)] {
        let s = sigma_comparison_term(varsigma, tau)?;
        println!(
            "ς = {varsigma}, τ = {tau}: term = {:.4}, threshold = {:.4}, τ above threshold: {}",
            s.term, s.threshold, s.tau_above_threshold
        );
    }
    Ok(())
}
