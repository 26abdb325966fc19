//! The cooperative local-SGD engine.
//!
//! One iteration applies `X_{k+1} = (X_k − ηG_k)S_kᵀ`, where unselected
//! client columns of `X_k` and `G_k` are zero and `S_k` is the scheduled
//! mixing matrix on aggregation iterations (`k mod τ == 0`) and the identity
//! otherwise. Iterations are numbered from 1, so a run of `K` iterations
//! ends on an aggregation whenever `τ` divides `K`.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::mixing::{delta_with, DeltaOptions, MixingMatrix, MixingSchedule, ScheduleKind};
use crate::objectives::{GradientOracle, Objective};
use crate::rng::{keyed, Domain};
use crate::selection::{select, zero_unselected_in_place, SelectionKind, SelectionPolicy, SelectionSet};
use crate::state::StateMatrix;

/// Any state entry beyond this magnitude aborts the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Any schedule, selection and auxiliary count.
    Unified,
    /// Uniform averaging every `τ` iterations.
    Psasgd,
    /// `τ = 1` with a fixed mixing matrix.
    Dpsgd,
    /// `τ = 1` with uniform averaging.
    FullySync,
    /// Elastic averaging with one anchor variable.
    Easgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Init {
    Zero,
    /// A seeded base vector with unit expected norm, multiplied by the factor.
    Scaled(f64),
    /// Every column starts at this point.
    Point(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub eta: f64,
    pub tau: usize,
    pub iterations: usize,
    /// Number of auxiliary columns `v` (unified only; EASGD always uses one).
    pub aux: usize,
    pub selection: SelectionPolicy,
    pub mixing: ScheduleKind,
    pub easgd_alpha: f64,
    pub init: Init,
    pub init_seed: u64,
    /// Seed of the gradient-noise streams.
    pub seed: u64,
}

impl RunConfig {
    /// Fully synchronous SGD with all clients.
    pub fn new(algorithm: Algorithm, eta: f64, tau: usize, iterations: usize) -> Self {
        Self {
            algorithm,
            eta,
            tau,
            iterations,
            aux: 0,
            selection: SelectionPolicy::all(),
            mixing: ScheduleKind::UniformJ,
            easgd_alpha: 0.0,
            init: Init::Zero,
            init_seed: 0,
            seed: 0,
        }
    }

    /// `(τ, schedule, v)` after applying the special-case rules.
    pub fn resolve(&self) -> Result<(MixingSchedule, usize)> {
        if self.iterations == 0 {
            return Err(Error::config("algorithm.iterations", "K must be >= 1"));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::config("algorithm.eta", format!("learning rate must be positive, got {}", self.eta)));
        }
        let plain = |path: &str| -> Result<()> {
            if self.aux != 0 {
                return Err(Error::config(path, "auxiliary variables are only used by unified and easgd"));
            }
            Ok(())
        };
        match self.algorithm {
            Algorithm::Unified => Ok((MixingSchedule::new(self.mixing.clone(), self.tau)?, self.aux)),
            Algorithm::Psasgd => {
                plain("algorithm.aux")?;
                Ok((MixingSchedule::new(ScheduleKind::UniformJ, self.tau)?, 0))
            }
            Algorithm::FullySync => {
                plain("algorithm.aux")?;
                Ok((MixingSchedule::new(ScheduleKind::UniformJ, 1)?, 0))
            }
            Algorithm::Dpsgd => {
                plain("algorithm.aux")?;
                match &self.mixing {
                    ScheduleKind::Static(_) | ScheduleKind::UniformJ => {
                        Ok((MixingSchedule::new(self.mixing.clone(), 1)?, 0))
                    }
                    _ => Err(Error::config("mixing.kind", "dpsgd needs a static mixing matrix")),
                }
            }
            Algorithm::Easgd => {
                if self.selection.kind != SelectionKind::All {
                    return Err(Error::config("selection.kind", "easgd runs with every client selected"));
                }
                Ok((MixingSchedule::new(ScheduleKind::UniformJ, self.tau)?, 1))
            }
        }
    }
}

/// One iteration of the trace, measured at `u_k` before the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub loss: f64,
    pub grad_norm_sq: f64,
    pub consensus_sq: f64,
    pub aggregated: bool,
    pub selected: Vec<usize>,
    /// Mean of `grad_norm_sq` over records `1..=k`.
    pub running_mean: f64,
    /// `‖u_{k+1} − (u_k − η_eff·mean selected gradient)‖`.
    pub identity_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    /// `(1/K) Σ ‖∇F(u_k)‖²`
    pub running_mean: f64,
    pub final_state: StateMatrix,
    /// `F` at the averaged model after the last iteration.
    pub final_loss: f64,
    pub max_identity_residual: f64,
    /// Largest δ over the mixing matrices applied in the run.
    pub max_delta: f64,
    pub aggregations: usize,
}

impl RunTrace {
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "k,loss,grad_norm_sq,consensus_sq,aggregated,selected")?;
        for r in &self.records {
            let sel: Vec<String> = r.selected.iter().map(usize::to_string).collect();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.k,
                r.loss,
                r.grad_norm_sq,
                r.consensus_sq,
                r.aggregated,
                sel.join(";")
            )?;
        }
        Ok(())
    }
}

/// Result of [`step`].
#[derive(Debug, Clone)]
pub struct Step {
    /// `(X_k − ηG_k)S_kᵀ` with unselected columns zeroed first.
    pub state: StateMatrix,
    pub mixing: Option<MixingMatrix>,
    /// `Σ_{i∈C_k} g_i`
    pub gradient_sum: Vec<f64>,
}

fn gradients(
    x: &StateMatrix,
    oracle: GradientOracle<'_>,
    sel: &SelectionSet,
    k: usize,
) -> Result<StateMatrix> {
    let mut g = StateMatrix::zeros(x.dim(), x.clients(), x.aux());
    for &i in sel.members() {
        let gi = oracle.grad(i, x.column(i), k);
        if gi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gradient for client {i} at iteration {k}")));
        }
        g.column_mut(i).copy_from_slice(&gi);
    }
    Ok(g)
}

fn column_sum(g: &StateMatrix) -> Vec<f64> {
    let mut s = vec![0.0; g.dim()];
    for c in g.columns() {
        s.iter_mut().zip(c).for_each(|(a, b)| *a += b);
    }
    s
}

/// One unified update at iteration `k`.
pub fn step(
    x: &StateMatrix,
    oracle: GradientOracle<'_>,
    schedule: &MixingSchedule,
    sel: &SelectionSet,
    eta: f64,
    k: usize,
) -> Result<Step> {
    let mut xz = x.clone();
    zero_unselected_in_place(&mut xz, sel);
    let g = gradients(&xz, oracle, sel, k)?;
    let gradient_sum = column_sum(&g);
    xz.axpy(eta, &g);
    let mixing = schedule.emit(k, sel, x.clients(), x.aux())?;
    let state = match &mixing {
        Some(w) => xz.mix(w.dense())?,
        None => xz,
    };
    Ok(Step {
        state,
        mixing,
        gradient_sum,
    })
}

/// Elastic-averaging update for client models `x` and anchor `z`.
///
/// On aggregation iterations each client is pulled towards the anchor
/// by `α(x_i − z)` and the anchor moves to `(1 − mα)z + mα·x̄`; otherwise the
/// clients take a plain local step and `z` is unchanged.
pub fn easgd_update(
    x: &[Vec<f64>],
    z: &[f64],
    g: &[Vec<f64>],
    eta: f64,
    alpha: f64,
    k: usize,
    tau: usize,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let m = x.len() as f64;
    let aggregate = k.is_multiple_of(tau);
    let next: Vec<Vec<f64>> = x
        .iter()
        .zip(g)
        .map(|(xi, gi)| {
            xi.iter()
                .zip(gi)
                .zip(z)
                .map(|((&a, &b), &c)| {
                    let local = a - eta * b;
                    if aggregate {
                        local - alpha * (a - c)
                    } else {
                        local
                    }
                })
                .collect()
        })
        .collect();
    let z_next = if aggregate {
        let d = z.len();
        (0..d)
            .map(|r| {
                let mean = x.iter().map(|xi| xi[r]).sum::<f64>() / m;
                (1.0 - m * alpha) * z[r] + m * alpha * mean
            })
            .collect()
    } else {
        z.to_vec()
    };
    (next, z_next)
}

/// The column-stochastic matrix of the elastic pull, acting on `[x_1..x_m, z]`.
pub fn easgd_matrix(m: usize, alpha: f64) -> Result<MixingMatrix> {
    let n = m + 1;
    let mut w = DenseMatrix::zeros(n, n);
    for i in 0..m {
        w.set(i, i, 1.0 - alpha);
        w.set(m, i, alpha);
        w.set(i, m, alpha);
    }
    w.set(m, m, 1.0 - m as f64 * alpha);
    MixingMatrix::from_dense(w)
}

fn initial_state(cfg: &RunConfig, d: usize, m: usize, v: usize) -> Result<StateMatrix> {
    Ok(match &cfg.init {
        Init::Zero => StateMatrix::zeros(d, m, v),
        Init::Scaled(factor) => {
            let mut rng = keyed(cfg.init_seed, Domain::Init, 0, 0);
            let scale = factor / (d as f64).sqrt();
            let base: Vec<f64> = (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            StateMatrix::replicated(&base, m, v)
        }
        Init::Point(p) => {
            if p.len() != d {
                return Err(Error::config("algorithm.init", format!("init point has {} entries, d = {d}", p.len())));
            }
            StateMatrix::replicated(p, m, v)
        }
    })
}

fn identity_residual(u_next: &[f64], u_before: &[f64], gsum: &[f64], eta: f64, n: usize) -> f64 {
    let scale = eta / n as f64;
    u_next
        .iter()
        .zip(u_before)
        .zip(gsum)
        .map(|((a, b), g)| {
            let r = a - (b - scale * g);
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

fn out_of_range(x: &StateMatrix) -> bool {
    x.columns()
        .iter()
        .flatten()
        .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
}

/// After a consensus aggregation, clients that did not receive the
/// aggregate (unselected ones) are given it.
fn broadcast(x: &mut StateMatrix, w: &MixingMatrix) {
    if w.consensus_row().is_none() {
        return;
    }
    let n = w.dim();
    let receiving: Vec<bool> = (0..n)
        .map(|i| (0..n).any(|j| w.dense().get(i, j) != 0.0))
        .collect();
    let Some(source) = receiving.iter().position(|&r| r) else {
        return;
    };
    let aggregate = x.column(source).to_vec();
    for j in 0..x.clients() {
        if !receiving[j] {
            x.column_mut(j).copy_from_slice(&aggregate);
        }
    }
}

/// δ of an applied matrix; a single column has nothing to disagree with.
fn applied_delta(w: &MixingMatrix, c: f64, opts: DeltaOptions) -> Result<f64> {
    if w.dim() < 2 {
        return Ok(0.0);
    }
    delta_with(w, c, opts)
}

/// The averaged model `u_k = X_k·1/(m+v)`.
pub fn averaged_model(x: &StateMatrix) -> Vec<f64> {
    x.averaged_model()
}

/// Stepwise driver behind [`run`].
pub struct Engine<'a> {
    cfg: RunConfig,
    objective: &'a dyn Objective,
    schedule: MixingSchedule,
    state: StateMatrix,
    m: usize,
    v: usize,
    c: f64,
    k: usize,
    grad_sum: f64,
    records: Vec<TraceRecord>,
    max_residual: f64,
    max_delta: f64,
    aggregations: usize,
}

impl<'a> Engine<'a> {
    pub fn new(cfg: &RunConfig, objective: &'a dyn Objective) -> Result<Self> {
        let (schedule, v) = cfg.resolve()?;
        let m = objective.clients();
        let d = objective.dim();
        let c = cfg.selection.effective_fraction(m)?;
        if cfg.algorithm == Algorithm::Easgd {
            let ma = m as f64 * cfg.easgd_alpha;
            if !(ma > 0.0 && ma <= 1.0) {
                return Err(Error::config("algorithm.easgd_alpha", format!("need 0 < m·alpha <= 1, got {ma}")));
            }
        }
        let state = initial_state(cfg, d, m, v)?;
        Ok(Self {
            cfg: cfg.clone(),
            objective,
            schedule,
            state,
            m,
            v,
            c,
            k: 1,
            grad_sum: 0.0,
            records: Vec::with_capacity(cfg.iterations),
            max_residual: 0.0,
            max_delta: 0.0,
            aggregations: 0,
        })
    }

    /// Iteration index of the next call to [`Engine::advance`].
    pub fn iteration(&self) -> usize {
        self.k
    }

    pub fn state(&self) -> &StateMatrix {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.k > self.cfg.iterations
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    /// Runs iteration `k`, records it and moves the state to `X_{k+1}`.
    pub fn advance(&mut self) -> Result<&TraceRecord> {
        let k = self.k;
        let tau = self.schedule.tau();
        let sel = select(&self.cfg.selection, (k - 1) / tau, self.m)?;
        let u = self.state.averaged_model();
        let loss = self.objective.global_loss(&u);
        let grad_norm_sq: f64 = self.objective.global_grad(&u).iter().map(|g| g * g).sum();
        let consensus_sq = self.state.consensus_sq();
        let oracle = GradientOracle::new(self.objective, self.cfg.seed);
        let eta = self.cfg.eta;
        let n = self.m + self.v;

        let (mut next, residual, applied) = if self.cfg.algorithm == Algorithm::Easgd {
            let g = match gradients(&self.state, oracle, &sel, k) {
                Ok(g) => g,
                Err(Error::Numerical(_)) => return self.diverged(k),
                Err(e) => return Err(e),
            };
            let (mut cols, z) = easgd_update(
                &self.state.columns()[..self.m],
                self.state.column(self.m),
                &g.columns()[..self.m],
                eta,
                self.cfg.easgd_alpha,
                k,
                tau,
            );
            cols.push(z);
            let next = match StateMatrix::from_columns(self.m, 1, cols) {
                Ok(next) => next,
                Err(_) => return self.diverged(k),
            };
            let residual = identity_residual(&next.averaged_model(), &u, &column_sum(&g), eta, n);
            let applied = if k.is_multiple_of(tau) {
                Some(easgd_matrix(self.m, self.cfg.easgd_alpha)?)
            } else {
                None
            };
            (next, residual, applied)
        } else {
            let mut xz = self.state.clone();
            zero_unselected_in_place(&mut xz, &sel);
            let u_before = xz.averaged_model();
            let out = match step(&self.state, oracle, &self.schedule, &sel, eta, k) {
                Ok(out) => out,
                Err(Error::Numerical(_)) => return self.diverged(k),
                Err(e) => return Err(e),
            };
            let residual = identity_residual(&out.state.averaged_model(), &u_before, &out.gradient_sum, eta, n);
            // Zeroing is bookkeeping: idle clients keep their model until a
            // broadcast reaches them.
            let mut next = out.state;
            for j in (0..self.m).filter(|&j| !sel.contains(j)) {
                next.column_mut(j).copy_from_slice(self.state.column(j));
            }
            (next, residual, out.mixing)
        };

        let aggregated = applied.is_some();
        if let Some(w) = &applied {
            self.aggregations += 1;
            self.max_delta = self.max_delta.max(applied_delta(w, self.c, DeltaOptions::default())?);
            if self.cfg.algorithm != Algorithm::Easgd {
                broadcast(&mut next, w);
            }
        }
        if out_of_range(&next) {
            return self.diverged(k);
        }
        self.max_residual = self.max_residual.max(residual);
        self.grad_sum += grad_norm_sq;
        self.records.push(TraceRecord {
            k,
            loss,
            grad_norm_sq,
            consensus_sq,
            aggregated,
            selected: sel.members().to_vec(),
            running_mean: self.grad_sum / k as f64,
            identity_residual: residual,
        });
        self.state = next;
        self.k += 1;
        Ok(self.records.last().expect("just pushed"))
    }

    fn diverged<T>(&self, k: usize) -> Result<T> {
        Err(Error::Divergence {
            iteration: k,
            trace: Box::new(self.snapshot()),
        })
    }

    fn snapshot(&self) -> RunTrace {
        let u = self.state.averaged_model();
        RunTrace {
            records: self.records.clone(),
            running_mean: if self.records.is_empty() { 0.0 } else { self.grad_sum / self.records.len() as f64 },
            final_state: self.state.clone(),
            final_loss: self.objective.global_loss(&u),
            max_identity_residual: self.max_residual,
            max_delta: self.max_delta,
            aggregations: self.aggregations,
        }
    }

    pub fn finish(self) -> RunTrace {
        self.snapshot()
    }
}

/// Runs all `K` iterations.
pub fn run(cfg: &RunConfig, objective: &dyn Objective) -> Result<RunTrace> {
    let mut engine = Engine::new(cfg, objective)?;
    while !engine.is_done() {
        engine.advance()?;
    }
    Ok(engine.finish())
}

/// Largest δ over every mixing matrix the configuration would apply in
/// `K` iterations, computed without simulating.
pub fn schedule_delta(cfg: &RunConfig, m: usize, opts: DeltaOptions) -> Result<f64> {
    let (schedule, v) = cfg.resolve()?;
    let c = cfg.selection.effective_fraction(m)?;
    if cfg.algorithm == Algorithm::Easgd {
        return if cfg.iterations >= schedule.tau() {
            applied_delta(&easgd_matrix(m, cfg.easgd_alpha)?, c, opts)
        } else {
            Ok(0.0)
        };
    }
    let tau = schedule.tau();
    let mut worst: f64 = 0.0;
    for k in (tau..=cfg.iterations).step_by(tau) {
        let sel = select(&cfg.selection, (k - 1) / tau, m)?;
        if let Some(w) = schedule.emit(k, &sel, m, v)? {
            worst = worst.max(applied_delta(&w, c, opts)?);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::QuadraticSuite;

    fn scalar_pair(sigma: f64) -> QuadraticSuite {
        QuadraticSuite::from_parts(DenseMatrix::identity(1), vec![vec![1.0], vec![3.0]], sigma).unwrap()
    }

    fn spread(d: usize, m: usize, sigma: f64) -> QuadraticSuite {
        let a = DenseMatrix::diag(&(0..d).map(|i| 0.5 + i as f64 / d as f64).collect::<Vec<_>>());
        let b = (0..m).map(|i| (0..d).map(|r| (i * d + r) as f64 * 0.1 - 1.0).collect()).collect();
        QuadraticSuite::from_parts(a, b, sigma).unwrap()
    }

    #[test]
    fn zero_rate_without_aggregation_leaves_state_unchanged() {
        let q = spread(3, 4, 0.5);
        let x = StateMatrix::from_columns(4, 0, (0..4).map(|i| vec![i as f64, 1.0, -2.0]).collect()).unwrap();
        let schedule = MixingSchedule::new(ScheduleKind::UniformJ, 5).unwrap();
        let sel = SelectionSet::everyone(0, 4);
        let out = step(&x, GradientOracle::new(&q, 1), &schedule, &sel, 0.0, 3).unwrap();
        assert_eq!(out.state, x);
        assert!(out.mixing.is_none());
    }

    #[test]
    fn single_client_is_plain_sgd() {
        let q = QuadraticSuite::from_parts(DenseMatrix::identity(1), vec![vec![2.0]], 0.0).unwrap();
        let mut cfg = RunConfig::new(Algorithm::FullySync, 0.25, 1, 5);
        cfg.init = Init::Point(vec![10.0]);
        let trace = run(&cfg, &q).unwrap();
        let mut x: f64 = 10.0;
        for r in &trace.records {
            assert_eq!(r.loss, 0.5 * x * x - 2.0 * x);
            x -= 0.25 * (x - 2.0);
        }
        assert!((trace.final_state.column(0)[0] - x).abs() < 1e-15);
    }

    #[test]
    fn psasgd_reaches_consensus_after_each_round() {
        let q = spread(2, 4, 0.3);
        let mut cfg = RunConfig::new(Algorithm::Psasgd, 0.1, 4, 12);
        cfg.seed = 9;
        let trace = run(&cfg, &q).unwrap();
        for r in &trace.records {
            if r.k % 4 == 1 {
                assert!(r.consensus_sq < 1e-24, "k={} consensus {}", r.k, r.consensus_sq);
            }
            assert_eq!(r.aggregated, r.k % 4 == 0);
        }
        assert!(trace.records[2].consensus_sq > 0.0);
        assert_eq!(trace.aggregations, 3);
    }

    #[test]
    fn special_cases_produce_identical_traces() {
        let q = spread(3, 5, 0.2);
        let mk = |alg| {
            let mut c = RunConfig::new(alg, 0.05, 1, 30);
            c.seed = 4;
            c.init = Init::Scaled(2.0);
            c.init_seed = 7;
            run(&c, &q).unwrap()
        };
        let full = mk(Algorithm::FullySync);
        assert_eq!(full, mk(Algorithm::Psasgd));
        assert_eq!(full, mk(Algorithm::Dpsgd));
    }

    #[test]
    fn noiseless_small_rate_loss_is_monotone() {
        let q = spread(4, 3, 0.0);
        let mut cfg = RunConfig::new(Algorithm::FullySync, 0.2, 1, 50);
        cfg.init = Init::Scaled(3.0);
        let trace = run(&cfg, &q).unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-14);
        }
    }

    #[test]
    fn averaged_model_identity_holds_with_aux_and_selection() {
        let q = spread(3, 6, 0.4);
        let mut cfg = RunConfig::new(Algorithm::Unified, 0.1, 3, 30);
        cfg.aux = 2;
        cfg.selection = SelectionPolicy::per_round_random(0.5, 3);
        cfg.mixing = ScheduleKind::SeededRandom { seed: 5, blend: 0.7 };
        let trace = run(&cfg, &q).unwrap();
        assert!(trace.max_identity_residual < 1e-12);
        assert_eq!(trace.aggregations, 10);
    }

    #[test]
    fn idle_clients_keep_their_model_until_broadcast() {
        let q = spread(2, 4, 0.0);
        let mut cfg = RunConfig::new(Algorithm::Psasgd, 0.1, 3, 6);
        cfg.selection = SelectionPolicy::static_random(0.5, 2);
        cfg.init = Init::Point(vec![1.0, -1.0]);
        let sel = select(&cfg.selection, 0, 4).unwrap();
        let idle = (0..4).find(|&j| !sel.contains(j)).unwrap();
        let busy = sel.members()[0];
        let mut engine = Engine::new(&cfg, &q).unwrap();
        engine.advance().unwrap();
        engine.advance().unwrap();
        assert_eq!(engine.state().column(idle), &[1.0, -1.0]);
        assert_ne!(engine.state().column(busy), &[1.0, -1.0]);
        engine.advance().unwrap();
        assert_eq!(engine.state().column(idle), engine.state().column(busy));
    }

    #[test]
    fn easgd_zero_alpha_is_local_sgd() {
        let x = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let g = vec![vec![0.5, 0.5], vec![1.0, -1.0]];
        let z = vec![9.0, 9.0];
        let (next, z_next) = easgd_update(&x, &z, &g, 0.1, 0.0, 2, 2);
        assert_eq!(next, vec![vec![0.95, 1.95], vec![2.9, 4.1]]);
        assert_eq!(z_next, z);
    }

    #[test]
    fn easgd_full_pull_moves_anchor_to_client_mean() {
        let x = vec![vec![1.0], vec![5.0]];
        let g = vec![vec![0.0], vec![0.0]];
        let (_, z_next) = easgd_update(&x, &[7.0], &g, 0.1, 0.5, 4, 2);
        assert_eq!(z_next, vec![3.0]);
    }

    #[test]
    fn easgd_scalar_trajectory() {
        // x₁ = 0.1, 0.3 → aggregation at k=2: x = 0.165, 0.495, z = 0.1
        // → 0.2485, 0.7455 → aggregation at k=4.
        let q = scalar_pair(0.0);
        let mut cfg = RunConfig::new(Algorithm::Easgd, 0.1, 2, 4);
        cfg.easgd_alpha = 0.25;
        let trace = run(&cfg, &q).unwrap();
        let fin = &trace.final_state;
        assert!((fin.column(0)[0] - 11461.0 / 40000.0).abs() < 1e-15);
        assert!((fin.column(1)[0] - 32383.0 / 40000.0).abs() < 1e-15);
        assert!((fin.column(2)[0] - 597.0 / 2000.0).abs() < 1e-15);
        assert!(trace.max_identity_residual < 1e-15);
    }

    #[test]
    fn easgd_rejects_pull_outside_unit_interval() {
        let q = scalar_pair(0.0);
        let mut cfg = RunConfig::new(Algorithm::Easgd, 0.1, 2, 4);
        cfg.easgd_alpha = 0.75;
        assert!(matches!(Engine::new(&cfg, &q), Err(Error::Config { .. })));
    }

    #[test]
    fn easgd_matrix_is_column_stochastic() {
        let w = easgd_matrix(3, 0.2).unwrap();
        assert!(crate::mixing::validate(&w, 1e-12).is_pass());
    }

    #[test]
    fn huge_rate_diverges_with_partial_trace() {
        let q = spread(2, 2, 0.0);
        let mut cfg = RunConfig::new(Algorithm::FullySync, 50.0, 1, 500);
        cfg.init = Init::Point(vec![1.0, 1.0]);
        match run(&cfg, &q) {
            Err(Error::Divergence { iteration, trace }) => {
                assert!(iteration < 500);
                assert_eq!(trace.records.len(), iteration - 1);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn configuration_rules() {
        let mut cfg = RunConfig::new(Algorithm::Psasgd, 0.1, 2, 4);
        cfg.aux = 1;
        assert!(matches!(cfg.resolve(), Err(Error::Config { .. })));
        let mut cfg = RunConfig::new(Algorithm::Dpsgd, 0.1, 1, 4);
        cfg.mixing = ScheduleKind::SeededRandom { seed: 1, blend: 1.0 };
        assert!(cfg.resolve().is_err());
        let mut cfg = RunConfig::new(Algorithm::Easgd, 0.1, 2, 4);
        cfg.selection = SelectionPolicy::static_random(0.5, 1);
        assert!(cfg.resolve().is_err());
        let (s, v) = RunConfig::new(Algorithm::FullySync, 0.1, 9, 4).resolve().unwrap();
        assert_eq!((s.tau(), v), (1, 0));
        assert!(RunConfig::new(Algorithm::FullySync, 0.0, 1, 4).resolve().is_err());
    }

    #[test]
    fn uniform_schedule_has_zero_delta() {
        let cfg = RunConfig::new(Algorithm::Psasgd, 0.1, 5, 40);
        assert_eq!(schedule_delta(&cfg, 6, DeltaOptions::default()).unwrap(), 0.0);
        let mut cfg = RunConfig::new(Algorithm::Unified, 0.1, 5, 40);
        cfg.mixing = ScheduleKind::SeededRandom { seed: 2, blend: 1.0 };
        assert!(schedule_delta(&cfg, 6, DeltaOptions::default()).unwrap() > 0.0);
    }

    #[test]
    fn trace_csv_layout() {
        let q = spread(2, 3, 0.1);
        let mut cfg = RunConfig::new(Algorithm::Psasgd, 0.1, 2, 3);
        cfg.selection = SelectionPolicy::static_random(2.0 / 3.0, 1);
        let trace = run(&cfg, &q).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,loss,grad_norm_sq,consensus_sq,aggregated,selected");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].contains(",true,"));
        assert_eq!(lines[1].rsplit(',').next().unwrap().split(';').count(), 2);
    }
}
