//! Theoretical error bounds for a run configuration: effective learning
//! rate, `S_series`, `P`, the IID and non-IID ε bounds and the validity
//! conditions attached to them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when checking the non-strict `η_eff L ≤ 1` condition.
const LR_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Smoothness `L`.
    pub l: f64,
    pub sigma: f64,
    pub kappa: f64,
    /// `F(u_1)`
    pub f_u1: f64,
    pub f_inf: f64,
    pub eta: f64,
    /// Total iterations `K`.
    pub k: usize,
    pub tau: usize,
    /// Selected fraction `c`.
    pub c: f64,
    pub m: usize,
    pub v: usize,
    pub delta: f64,
    /// `‖X₁‖²_F`
    pub x1_frob_sq: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    /// Divide the initialization term by `K` (tabulated form) instead of
    /// leaving it undivided.
    pub x1_term_over_k: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionFlags {
    /// `η_eff L ≤ 1`
    pub lr_ok: bool,
    /// `P ≤ min(1/6, 1/(6L²+3), c/(6L²))`
    pub p_ok: bool,
    /// `c ≥ 6PL²`
    pub c_ok: bool,
    /// `K ≥ 2(2τ−1)` when `δ ≥ 1`, `K ≥ δ(2τ−½)` when `δ < 1`.
    pub k_ok: bool,
}

impl ConditionFlags {
    pub fn all(&self) -> bool {
        self.lr_ok && self.p_ok && self.c_ok && self.k_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    pub options: BoundOptions,
    pub eta_eff: f64,
    /// Horizon `⌊K/τ⌋·τ` used for `S_series` and `P`.
    pub horizon: usize,
    pub truncated: bool,
    pub s_series: f64,
    pub p_value: f64,
    /// The four bracketed terms of ε_IID (before the factor 4).
    pub iid_terms: [f64; 4],
    pub epsilon_iid: f64,
    pub epsilon_niid: f64,
    pub flags: ConditionFlags,
}

/// `(cm/(m+v))·η`
pub fn eta_eff(eta: f64, c: f64, m: usize, v: usize) -> f64 {
    c * m as f64 / (m + v) as f64 * eta
}

fn horizon(k: usize, tau: usize) -> Result<usize> {
    if tau == 0 {
        return Err(Error::Domain("τ must be >= 1".into()));
    }
    if k < tau {
        return Err(Error::Domain(format!("K = {k} is shorter than τ = {tau}")));
    }
    Ok(k / tau * tau)
}

/// `(K/τ − 1)(2 + K/(2τ))` over whole periods.
pub fn s_series(k: usize, tau: usize) -> Result<f64> {
    let rounds = (horizon(k, tau)? / tau) as f64;
    Ok((rounds - 1.0) * (2.0 + rounds / 2.0))
}

/// `η²δτ[2τ·S_series + (τ−1)(1 + K/τ)]`
pub fn p_value(eta: f64, delta: f64, tau: usize, k: usize) -> Result<f64> {
    let s = s_series(k, tau)?;
    let t = tau as f64;
    let rounds = (horizon(k, tau)? / tau) as f64;
    Ok(eta * eta * delta * t * (2.0 * t * s + (t - 1.0) * (1.0 + rounds)))
}

fn validate(inputs: &BoundInputs) -> Result<()> {
    let reals = [
        ("L", inputs.l),
        ("sigma", inputs.sigma),
        ("kappa", inputs.kappa),
        ("eta", inputs.eta),
        ("delta", inputs.delta),
        ("x1_frob_sq", inputs.x1_frob_sq),
    ];
    for (name, v) in reals {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    if !(inputs.c > 0.0 && inputs.c <= 1.0) {
        return Err(Error::Domain(format!("c must lie in (0, 1], got {}", inputs.c)));
    }
    if inputs.m == 0 {
        return Err(Error::Domain("m must be >= 1".into()));
    }
    horizon(inputs.k, inputs.tau).map(|_| ())
}

fn iid_terms(inputs: &BoundInputs, opts: BoundOptions) -> [f64; 4] {
    let ee = eta_eff(inputs.eta, inputs.c, inputs.m, inputs.v);
    let k = inputs.k as f64;
    let cm = inputs.c * inputs.m as f64;
    let l = inputs.l;
    let s2 = inputs.sigma * inputs.sigma;
    let mut init = inputs.delta * l * l * inputs.x1_frob_sq / cm;
    if opts.x1_term_over_k {
        init /= k;
    }
    [
        2.0 * (inputs.f_u1 - inputs.f_inf) / (ee * k),
        ee * l * s2 / cm,
        init,
        inputs.eta * inputs.eta * s2 * l * l * inputs.delta * (k - 1.0),
    ]
}

/// `4·[2(F(u₁)−F_inf)/(η_eff K) + η_eff Lσ²/(cm) + δL²‖X₁‖²/(cm) + η²σ²L²δ(K−1)]`
pub fn epsilon_iid(inputs: &BoundInputs) -> Result<f64> {
    Ok(report_with(inputs, BoundOptions::default())?.epsilon_iid)
}

/// `ε_IID + 12PL²κ²`
pub fn epsilon_niid(inputs: &BoundInputs) -> Result<f64> {
    Ok(report_with(inputs, BoundOptions::default())?.epsilon_niid)
}

/// Flags from the raw quantities.
pub fn flags_for(eta_eff: f64, l: f64, p: f64, c: f64, k: usize, tau: usize, delta: f64) -> ConditionFlags {
    let l2 = l * l;
    let c_cap = if l2 > 0.0 { c / (6.0 * l2) } else { f64::INFINITY };
    let p_cap = (1.0_f64 / 6.0).min(1.0 / (6.0 * l2 + 3.0)).min(c_cap);
    let k = k as f64;
    let t = tau as f64;
    let k_ok = if delta >= 1.0 {
        k >= 2.0 * (2.0 * t - 1.0)
    } else {
        k >= delta * (2.0 * t - 0.5)
    };
    ConditionFlags {
        lr_ok: eta_eff * l <= 1.0 + LR_SLACK,
        p_ok: p >= 0.0 && p <= p_cap,
        c_ok: c >= 6.0 * p * l2,
        k_ok,
    }
}

pub fn check_conditions(inputs: &BoundInputs) -> Result<ConditionFlags> {
    Ok(report_with(inputs, BoundOptions::default())?.flags)
}

pub fn report(inputs: &BoundInputs) -> Result<BoundReport> {
    report_with(inputs, BoundOptions::default())
}

/// Every quantity is reported even when a condition flag fails.
pub fn report_with(inputs: &BoundInputs, options: BoundOptions) -> Result<BoundReport> {
    validate(inputs)?;
    let ee = eta_eff(inputs.eta, inputs.c, inputs.m, inputs.v);
    let h = horizon(inputs.k, inputs.tau)?;
    let s = s_series(inputs.k, inputs.tau)?;
    let p = p_value(inputs.eta, inputs.delta, inputs.tau, inputs.k)?;
    let terms = iid_terms(inputs, options);
    let eps_iid = 4.0 * terms.iter().sum::<f64>();
    let eps_niid = eps_iid + 12.0 * p * inputs.l * inputs.l * inputs.kappa * inputs.kappa;
    Ok(BoundReport {
        inputs: inputs.clone(),
        options,
        eta_eff: ee,
        horizon: h,
        truncated: h != inputs.k,
        s_series: s,
        p_value: p,
        iid_terms: terms,
        epsilon_iid: eps_iid,
        epsilon_niid: eps_niid,
        flags: flags_for(ee, inputs.l, p, inputs.c, inputs.k, inputs.tau, inputs.delta),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corollary1 {
    pub eta: f64,
    /// `K ≥ √(cm)`
    pub k_ok: bool,
    /// Coefficient of the `O(1/√(cm))` term.
    pub sqrt_term: f64,
    /// `m/(cK)`; multiply by δ for the second term.
    pub delta_coeff: f64,
}

/// `η = (m+v)/(Lcm)·√(cm/K²)`
pub fn corollary1_lr(l: f64, c: f64, m: usize, v: usize, k: usize) -> Corollary1 {
    let cm = c * m as f64;
    let k = k as f64;
    Corollary1 {
        eta: (m + v) as f64 / (l * cm) * (cm / (k * k)).sqrt(),
        k_ok: k >= cm.sqrt(),
        sqrt_term: 1.0 / cm.sqrt(),
        delta_coeff: m as f64 / (c * k),
    }
}

/// Comparison with the eigenvalue-based constant of symmetric mixing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaComparison {
    /// `((1+ς²)/(1−ς²))τ − 1`
    pub term: f64,
    /// `(1−ς²)/(2ς²)`; infinite at `ς = 0`.
    pub threshold: f64,
    /// `τ` strictly exceeds the threshold.
    pub tau_above_threshold: bool,
    /// Published `(ς, τ)` pairs next to the formula threshold at that ς.
    pub published: Vec<PublishedThreshold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedThreshold {
    pub varsigma: f64,
    pub published_tau: f64,
    pub formula_threshold: f64,
}

fn threshold(varsigma: f64) -> f64 {
    if varsigma == 0.0 {
        f64::INFINITY
    } else {
        (1.0 - varsigma * varsigma) / (2.0 * varsigma * varsigma)
    }
}

pub fn sigma_comparison_term(varsigma: f64, tau: usize) -> Result<SigmaComparison> {
    if !(0.0..1.0).contains(&varsigma) {
        return Err(Error::Domain(format!("ς must lie in [0, 1), got {varsigma}")));
    }
    let s2 = varsigma * varsigma;
    let t = tau as f64;
    let th = threshold(varsigma);
    let published = [(1.0 / 3.0_f64.sqrt(), 1.0), (0.2, 2.0), (1.0 / 7.0, 3.0)]
        .into_iter()
        .map(|(s, tau)| PublishedThreshold {
            varsigma: s,
            published_tau: tau,
            formula_threshold: threshold(s),
        })
        .collect();
    Ok(SigmaComparison {
        term: (1.0 + s2) / (1.0 - s2) * t - 1.0,
        threshold: th,
        tau_above_threshold: t > th,
        published,
    })
}
