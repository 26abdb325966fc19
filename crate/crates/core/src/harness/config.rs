//! Experiment configuration: a TOML document of flat tables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixing::{DeltaOptions, MixingMatrix, ScheduleKind};
use crate::objectives::{make_quadratic, LogisticSpec, LogisticSuite, Objective, Partition};
use crate::selection::{SelectionKind, SelectionPolicy};
use crate::trainer::{Algorithm, Init, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    Quadratic,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionKind {
    Iid,
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub kind: ObjectiveKind,
    pub dim: usize,
    pub clients: usize,
    /// Explicit Hessian eigenvalues; otherwise evenly spaced in
    /// `[spectrum_min, spectrum_max]`.
    pub spectrum: Option<Vec<f64>>,
    #[serde(default = "default_spectrum_min")]
    pub spectrum_min: f64,
    #[serde(default = "one")]
    pub spectrum_max: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_partition")]
    pub partition: PartitionKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub batch: usize,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default = "default_separation")]
    pub separation: f64,
    pub csv: Option<PathBuf>,
}

fn default_spectrum_min() -> f64 {
    0.1
}
fn one() -> f64 {
    1.0
}
fn default_samples() -> usize {
    2000
}
fn default_partition() -> PartitionKind {
    PartitionKind::Iid
}
fn default_alpha() -> f64 {
    0.6
}
fn default_ridge() -> f64 {
    1e-3
}
fn default_separation() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    pub kind: Algorithm,
    pub eta: Option<f64>,
    /// Target effective rate; converted to `η = η_eff·(m+v)/(cm)`.
    pub eta_eff: Option<f64>,
    #[serde(default = "one_usize")]
    pub tau: usize,
    pub iterations: usize,
    #[serde(default)]
    pub aux: usize,
    #[serde(default)]
    pub easgd_alpha: f64,
    /// Zero init when 0, otherwise a seeded base model times this factor.
    #[serde(default)]
    pub init_scale: f64,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingKindName {
    Uniform,
    Static,
    Periodic,
    Random,
    Proportional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingSection {
    pub kind: MixingKindName,
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub files: Vec<PathBuf>,
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub blend: f64,
    #[serde(default)]
    pub sizes: Vec<f64>,
    #[serde(default = "yes")]
    pub count_structural_zeros: bool,
}

fn yes() -> bool {
    true
}

impl Default for MixingSection {
    fn default() -> Self {
        Self {
            kind: MixingKindName::Uniform,
            file: None,
            files: Vec::new(),
            seed: None,
            blend: 1.0,
            sizes: Vec::new(),
            count_structural_zeros: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    pub kind: SelectionKind,
    #[serde(default = "one")]
    pub fraction: f64,
    pub seed: Option<u64>,
}

impl Default for SelectionSection {
    fn default() -> Self {
        Self {
            kind: SelectionKind::All,
            fraction: 1.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub tau: Vec<usize>,
    #[serde(default)]
    pub c: Vec<f64>,
    #[serde(default)]
    pub init_scale: Vec<f64>,
    #[serde(default)]
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    /// Lower bound on the loss when the objective has no closed form.
    pub f_inf: Option<f64>,
    /// Overrides the oracle noise level used in the bound.
    pub sigma: Option<f64>,
    #[serde(default)]
    pub x1_term_over_k: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSection,
    pub algorithm: AlgorithmSection,
    #[serde(default)]
    pub mixing: MixingSection,
    #[serde(default)]
    pub selection: SelectionSection,
    pub run: RunSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// One combination of sweep-axis values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: usize,
    pub c: f64,
    pub init_scale: f64,
    /// Explicit learning rate, if swept.
    pub eta: Option<f64>,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        let eta = self.eta.map_or_else(|| "cfg".to_string(), |e| e.to_string());
        format!("tau={},c={},init_scale={},eta={}", self.tau, self.c, self.init_scale, eta)
    }

    /// Stable 64-bit FNV-1a of the label, as 16 hex digits.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.label().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let span = e.span().map(|s| format!(" (bytes {}..{})", s.start, s.end)).unwrap_or_default();
            Error::config("<config>", format!("{}{span}", e.message()))
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("<config>", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Replaces the seed list with a single seed (the `COOPSGD_SEED` hook).
    pub fn override_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.run.seeds = vec![s];
        }
    }

    fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.run.seeds.is_empty() {
            return Err(Error::config("run.seeds", "at least one seed is required"));
        }
        if self.algorithm.eta.is_none() && self.algorithm.eta_eff.is_none() && self.sweep.eta.is_empty() {
            return Err(Error::config("algorithm.eta", "set eta, eta_eff or sweep.eta"));
        }
        if self.objective.clients == 0 {
            return Err(Error::config("objective.clients", "need at least one client"));
        }
        if self.objective.kind == ObjectiveKind::Quadratic && self.objective.dim == 0 {
            return Err(Error::config("objective.dim", "dimension must be >= 1"));
        }
        if self.objective.sigma < 0.0 {
            return Err(Error::config("objective.sigma", "sigma must be >= 0"));
        }
        for p in self.points() {
            if p.tau > self.algorithm.iterations {
                return Err(Error::config(
                    "algorithm.iterations",
                    format!("K = {} is shorter than τ = {} (sweep point {})", self.algorithm.iterations, p.tau, p.label()),
                ));
            }
            self.run_config(&p, self.run.seeds[0], self.objective.clients)
                .map_err(|e| match e {
                    Error::Config { path, message } => {
                        Error::config(path, format!("{message} (sweep point {})", p.label()))
                    }
                    other => other,
                })?
                .resolve()?;
        }
        Ok(())
    }

    /// Cartesian product of the sweep axes, in the order τ, c, init_scale, η.
    pub fn points(&self) -> Vec<SweepPoint> {
        let taus = if self.sweep.tau.is_empty() { vec![self.algorithm.tau] } else { self.sweep.tau.clone() };
        let cs = if self.sweep.c.is_empty() { vec![self.selection.fraction] } else { self.sweep.c.clone() };
        let inits = if self.sweep.init_scale.is_empty() {
            vec![self.algorithm.init_scale]
        } else {
            self.sweep.init_scale.clone()
        };
        let etas: Vec<Option<f64>> = if self.sweep.eta.is_empty() {
            vec![None]
        } else {
            self.sweep.eta.iter().copied().map(Some).collect()
        };
        let mut out = Vec::new();
        for &tau in &taus {
            for &c in &cs {
                for &init_scale in &inits {
                    for &eta in &etas {
                        out.push(SweepPoint { tau, c, init_scale, eta });
                    }
                }
            }
        }
        out
    }

    pub fn delta_options(&self) -> DeltaOptions {
        DeltaOptions {
            count_structural_zeros: self.mixing.count_structural_zeros,
        }
    }

    fn schedule_kind(&self, seed: u64) -> Result<ScheduleKind> {
        let mx = &self.mixing;
        Ok(match mx.kind {
            MixingKindName::Uniform => ScheduleKind::UniformJ,
            MixingKindName::Static => {
                let file = mx
                    .file
                    .as_ref()
                    .ok_or_else(|| Error::config("mixing.file", "static mixing needs a matrix file"))?;
                let w = MixingMatrix::read_json(&self.resolve_path(file))
                    .map_err(|e| Error::config("mixing.file", e.to_string()))?;
                ScheduleKind::Static(w.dense().clone())
            }
            MixingKindName::Periodic => {
                if mx.files.is_empty() {
                    return Err(Error::config("mixing.files", "periodic mixing needs matrix files"));
                }
                let list = mx
                    .files
                    .iter()
                    .map(|f| {
                        MixingMatrix::read_json(&self.resolve_path(f))
                            .map(|w| w.dense().clone())
                            .map_err(|e| Error::config("mixing.files", e.to_string()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                ScheduleKind::PeriodicList(list)
            }
            MixingKindName::Random => ScheduleKind::SeededRandom {
                seed: mx.seed.unwrap_or(seed),
                blend: mx.blend,
            },
            MixingKindName::Proportional => {
                if mx.sizes.len() != self.objective.clients {
                    return Err(Error::config("mixing.sizes", "need one dataset size per client"));
                }
                ScheduleKind::Proportional { sizes: mx.sizes.clone() }
            }
        })
    }

    /// Run configuration for one sweep point and seed.
    pub fn run_config(&self, point: &SweepPoint, seed: u64, m: usize) -> Result<RunConfig> {
        let a = &self.algorithm;
        let selection = SelectionPolicy {
            kind: self.selection.kind,
            fraction: point.c,
            seed: self.selection.seed.unwrap_or(seed),
        };
        let v = match a.kind {
            Algorithm::Easgd => 1,
            Algorithm::Unified => a.aux,
            _ => a.aux,
        };
        let eta = match (point.eta, a.eta, a.eta_eff) {
            (Some(e), _, _) => e,
            (None, _, Some(target)) => {
                let c = selection.effective_fraction(m)?;
                target * (m + v) as f64 / (c * m as f64)
            }
            (None, Some(e), None) => e,
            (None, None, None) => return Err(Error::config("algorithm.eta", "missing learning rate")),
        };
        Ok(RunConfig {
            algorithm: a.kind,
            eta,
            tau: point.tau,
            iterations: a.iterations,
            aux: if a.kind == Algorithm::Easgd { 0 } else { a.aux },
            selection,
            mixing: self.schedule_kind(seed)?,
            easgd_alpha: a.easgd_alpha,
            init: if point.init_scale == 0.0 { Init::Zero } else { Init::Scaled(point.init_scale) },
            init_seed: self.objective.seed,
            seed,
        })
    }

    /// Builds the objective; fixed across seeds.
    pub fn build_objective(&self) -> Result<Box<dyn Objective>> {
        let o = &self.objective;
        match o.kind {
            ObjectiveKind::Quadratic => {
                let spectrum = match &o.spectrum {
                    Some(s) => s.clone(),
                    None if o.dim == 1 => vec![o.spectrum_max],
                    None => (0..o.dim)
                        .map(|i| o.spectrum_min + (o.spectrum_max - o.spectrum_min) * i as f64 / (o.dim - 1) as f64)
                        .collect(),
                };
                let suite = make_quadratic(o.dim, o.clients, &spectrum, o.kappa, o.seed)
                    .map_err(|e| match e {
                        Error::Config { path, message } => Error::Config { path, message },
                        other => Error::config("objective", other.to_string()),
                    })?
                    .with_sigma(o.sigma);
                Ok(Box::new(suite))
            }
            ObjectiveKind::Logistic => {
                let spec = LogisticSpec {
                    dim: o.dim,
                    clients: o.clients,
                    samples: o.samples,
                    partition: match o.partition {
                        PartitionKind::Iid => Partition::Iid,
                        PartitionKind::Dirichlet => Partition::Dirichlet { alpha: o.alpha },
                    },
                    batch: o.batch,
                    ridge: o.ridge,
                    separation: o.separation,
                    seed: o.seed,
                };
                let suite = match &o.csv {
                    Some(p) => LogisticSuite::from_csv(&self.resolve_path(p), &spec),
                    None => LogisticSuite::generate(&spec),
                }
                .map_err(|e| match e {
                    Error::Config { path, message } => Error::Config { path, message },
                    other => Error::config("objective", other.to_string()),
                })?;
                Ok(Box::new(suite))
            }
        }
    }
}
