//! Experiment runner: sweeps, per-run outputs, bound comparisons and the
//! selection-mode comparison.

pub mod config;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{report_with, BoundInputs, BoundOptions, BoundReport, ConditionFlags};
use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::selection::{SelectionKind, SelectionPolicy};
use crate::trainer::{run, schedule_delta, Engine, RunConfig, RunTrace};

pub use config::{ExperimentConfig, SweepPoint};

/// Draws used to estimate the noise level when the oracle has no exact σ.
const SIGMA_DRAWS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Iid,
    Niid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Diverged,
}

/// Measured metric against the applicable bound for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub point: String,
    pub point_hash: String,
    pub seed: u64,
    pub config: RunConfig,
    pub status: RunStatus,
    /// `(1/K) Σ ‖∇F(u_k)‖²`; absent for diverged runs.
    pub measured: Option<f64>,
    pub final_loss: Option<f64>,
    pub bound_kind: BoundKind,
    pub bound: f64,
    pub flags: ConditionFlags,
    /// Only set when every condition flag passes.
    pub satisfied: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub point: String,
    pub seed: u64,
    pub status: RunStatus,
    pub diverged_at: Option<usize>,
    pub iterations_recorded: usize,
    pub running_mean: f64,
    pub final_loss: f64,
    pub aggregations: usize,
    pub max_identity_residual: f64,
    pub max_delta: f64,
    pub config: RunConfig,
}

/// Bound inputs for a run configuration on `objective`.
pub fn bound_inputs(cfg: &ExperimentConfig, run_cfg: &RunConfig, objective: &dyn Objective) -> Result<BoundInputs> {
    let m = objective.clients();
    let engine = Engine::new(run_cfg, objective)?;
    let x1 = engine.state();
    let u1 = x1.averaged_model();
    let (_, v) = run_cfg.resolve()?;
    let sigma = match (cfg.bounds.sigma, objective.sigma()) {
        (Some(s), _) => s,
        (None, Some(s)) => s,
        (None, None) => objective.noise_variance_at(run_cfg.seed, &u1, SIGMA_DRAWS).sqrt(),
    };
    let kappa = objective
        .kappa_sq()
        .unwrap_or_else(|| objective.dissimilarity_at(&u1))
        .sqrt();
    let f_inf = cfg.bounds.f_inf.or_else(|| objective.f_inf()).unwrap_or(0.0);
    Ok(BoundInputs {
        l: objective.smoothness(),
        sigma,
        kappa,
        f_u1: objective.global_loss(&u1),
        f_inf,
        eta: run_cfg.eta,
        k: run_cfg.iterations,
        tau: engine_tau(run_cfg)?,
        c: run_cfg.selection.effective_fraction(m)?,
        m,
        v,
        delta: schedule_delta(run_cfg, m, cfg.delta_options())?,
        x1_frob_sq: x1.frobenius_sq(),
    })
}

fn engine_tau(cfg: &RunConfig) -> Result<usize> {
    Ok(cfg.resolve()?.0.tau())
}

fn bound_report(cfg: &ExperimentConfig, run_cfg: &RunConfig, objective: &dyn Objective) -> Result<BoundReport> {
    let inputs = bound_inputs(cfg, run_cfg, objective)?;
    report_with(
        &inputs,
        BoundOptions {
            x1_term_over_k: cfg.bounds.x1_term_over_k,
        },
    )
}

fn pick_bound(report: &BoundReport) -> (BoundKind, f64) {
    if report.inputs.kappa > 0.0 {
        (BoundKind::Niid, report.epsilon_niid)
    } else {
        (BoundKind::Iid, report.epsilon_iid)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    use std::io::Write;
    writeln!(f)?;
    Ok(())
}

struct Job {
    point: SweepPoint,
    seed: u64,
}

/// Executes one run and writes `trace.csv`, `summary.json`, `bounds.json`.
fn execute(cfg: &ExperimentConfig, objective: &dyn Objective, job: &Job, dir: &Path) -> Result<ComparisonRecord> {
    let m = objective.clients();
    let run_cfg = cfg.run_config(&job.point, job.seed, m)?;
    let report = bound_report(cfg, &run_cfg, objective)?;
    fs::create_dir_all(dir)?;
    write_json(&dir.join("bounds.json"), &report)?;

    let (trace, status, diverged_at) = match run(&run_cfg, objective) {
        Ok(t) => (t, RunStatus::Ok, None),
        Err(Error::Divergence { iteration, trace }) => (*trace, RunStatus::Diverged, Some(iteration)),
        Err(e) => return Err(e),
    };
    let mut w = BufWriter::new(fs::File::create(dir.join("trace.csv"))?);
    trace.write_csv(&mut w)?;
    drop(w);
    let summary = summarize(&job.point, job.seed, &run_cfg, &trace, status, diverged_at);
    write_json(&dir.join("summary.json"), &summary)?;

    let (bound_kind, bound) = pick_bound(&report);
    let ok = status == RunStatus::Ok;
    let measured = ok.then_some(trace.running_mean);
    Ok(ComparisonRecord {
        point: job.point.label(),
        point_hash: job.point.hash(),
        seed: job.seed,
        config: run_cfg,
        status,
        measured,
        final_loss: ok.then_some(trace.final_loss),
        bound_kind,
        bound,
        flags: report.flags,
        satisfied: match measured {
            Some(v) if report.flags.all() => Some(v <= bound),
            _ => None,
        },
    })
}

fn summarize(
    point: &SweepPoint,
    seed: u64,
    cfg: &RunConfig,
    trace: &RunTrace,
    status: RunStatus,
    diverged_at: Option<usize>,
) -> RunSummary {
    RunSummary {
        point: point.label(),
        seed,
        status,
        diverged_at,
        iterations_recorded: trace.records.len(),
        running_mean: trace.running_mean,
        final_loss: trace.final_loss,
        aggregations: trace.aggregations,
        max_identity_residual: trace.max_identity_residual,
        max_delta: trace.max_delta,
        config: cfg.clone(),
    }
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| Error::config("--jobs", e.to_string()))
}

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    pub records: Vec<ComparisonRecord>,
}

impl ExperimentOutcome {
    pub fn all_diverged(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.status == RunStatus::Diverged)
    }
}

const COMPARISON_HEADER: [&str; 17] = [
    "point_hash", "point", "seed", "tau", "c", "init_scale", "eta", "status", "measured", "final_loss",
    "bound_kind", "bound", "lr_ok", "p_ok", "c_ok", "k_ok", "satisfied",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_comparison_csv(path: &Path, records: &[ComparisonRecord], points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(COMPARISON_HEADER)?;
    for r in records {
        let p = points.iter().find(|p| p.hash() == r.point_hash);
        let init_scale = p.map_or(0.0, |p| p.init_scale);
        w.write_record([
            r.point_hash.clone(),
            r.point.clone(),
            r.seed.to_string(),
            r.config.tau.to_string(),
            r.config.selection.fraction.to_string(),
            init_scale.to_string(),
            r.config.eta.to_string(),
            match r.status {
                RunStatus::Ok => "ok".into(),
                RunStatus::Diverged => "diverged".into(),
            },
            opt(r.measured),
            opt(r.final_loss),
            match r.bound_kind {
                BoundKind::Iid => "iid".into(),
                BoundKind::Niid => "niid".into(),
            },
            r.bound.to_string(),
            r.flags.lr_ok.to_string(),
            r.flags.p_ok.to_string(),
            r.flags.c_ok.to_string(),
            r.flags.k_ok.to_string(),
            r.satisfied.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every sweep point × seed and writes
/// `<out>/<point-hash>/<seed>/{trace.csv,summary.json,bounds.json}` plus
/// `<out>/comparison.csv`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, jobs: Option<usize>) -> Result<ExperimentOutcome> {
    let objective = cfg.build_objective()?;
    let points = cfg.points();
    let work: Vec<Job> = points
        .iter()
        .flat_map(|p| cfg.run.seeds.iter().map(move |&seed| Job { point: p.clone(), seed }))
        .collect();
    fs::create_dir_all(out)?;
    let objective: &dyn Objective = objective.as_ref();
    let records = pool(jobs)?.install(|| {
        work.par_iter()
            .map(|job| {
                let dir = out.join(job.point.hash()).join(job.seed.to_string());
                execute(cfg, objective, job, &dir)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    write_comparison_csv(&out.join("comparison.csv"), &records, &points)?;
    Ok(ExperimentOutcome {
        out_dir: out.to_path_buf(),
        records,
    })
}

/// Bound reports for every sweep point (first seed) without simulating.
pub fn bounds_only(cfg: &ExperimentConfig) -> Result<Vec<(SweepPoint, BoundReport)>> {
    let objective = cfg.build_objective()?;
    let m = objective.clients();
    cfg.points()
        .into_iter()
        .map(|p| {
            let rc = cfg.run_config(&p, cfg.run.seeds[0], m)?;
            let r = bound_report(cfg, &rc, objective.as_ref())?;
            Ok((p, r))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeSummary {
    pub kind: SelectionKind,
    pub final_losses: Vec<f64>,
    pub median_final_loss: f64,
    pub records: Vec<ComparisonRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionComparison {
    pub per_round: ModeSummary,
    pub static_random: ModeSummary,
    pub warnings: Vec<String>,
}

impl SelectionComparison {
    pub fn per_round_not_worse(&self) -> bool {
        self.per_round.median_final_loss <= self.static_random.median_final_loss
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs per-round-random and static-random selection with matched seeds
/// and reports the median final global loss of each.
pub fn compare_selection_modes(cfg: &ExperimentConfig, out: &Path, jobs: Option<usize>) -> Result<SelectionComparison> {
    let mut warnings = Vec::new();
    if cfg.run.seeds.len() < 5 {
        warnings.push(format!(
            "only {} seed(s); medians over fewer than 5 runs are not meaningful",
            cfg.run.seeds.len()
        ));
    }
    let mut mode = |kind: SelectionKind, name: &str| -> Result<ModeSummary> {
        let mut c = cfg.clone();
        c.selection.kind = kind;
        let outcome = run_experiment(&c, &out.join(name), jobs)?;
        let final_losses: Vec<f64> = outcome.records.iter().filter_map(|r| r.final_loss).collect();
        if final_losses.len() < outcome.records.len() {
            warnings.push(format!("{name}: {} run(s) diverged", outcome.records.len() - final_losses.len()));
        }
        Ok(ModeSummary {
            kind,
            median_final_loss: median(&final_losses),
            final_losses,
            records: outcome.records,
        })
    };
    let per_round = mode(SelectionKind::PerRoundRandom, "per-round-random")?;
    let static_random = mode(SelectionKind::StaticRandom, "static-random")?;
    let cmp = SelectionComparison {
        per_round,
        static_random,
        warnings,
    };
    write_json(&out.join("selection_comparison.json"), &cmp)?;
    Ok(cmp)
}

/// Selection policy helper used by examples and tests.
pub fn policy(kind: SelectionKind, fraction: f64, seed: u64) -> SelectionPolicy {
    SelectionPolicy { kind, fraction, seed }
}
