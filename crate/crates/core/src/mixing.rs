//! Column-stochastic mixing matrices: builders, validation, schedules and
//! the δ consensus bound with its brute-force counterpart.

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{frobenius_norm_sq, j_matrix, DenseMatrix};
use crate::rng::{keyed, Domain};
use crate::selection::SelectionSet;

/// Column-sum tolerance used by the builders and the JSON loader.
pub const COLUMN_SUM_TOL: f64 = 1e-9;

/// A mixing matrix together with the indices of its nonzero columns
/// (selected clients plus every auxiliary variable).
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    w: DenseMatrix,
    active: Vec<usize>,
}

impl MixingMatrix {
    /// Wraps `w`, taking the active set from its nonzero columns.
    pub fn from_dense(w: DenseMatrix) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::Dimension(format!(
                "mixing matrix must be square, got {}x{}",
                w.rows(),
                w.cols()
            )));
        }
        let active = (0..w.cols())
            .filter(|&j| (0..w.rows()).any(|i| w.get(i, j) != 0.0))
            .collect();
        Ok(Self { w, active })
    }

    pub fn dense(&self) -> &DenseMatrix {
        &self.w
    }

    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// Same matrix with the columns outside `keep` set to zero.
    pub fn masked(&self, keep: &[usize]) -> Self {
        let mut w = self.w.clone();
        let n = self.dim();
        for j in (0..n).filter(|j| !keep.contains(j)) {
            for i in 0..n {
                w.set(i, j, 0.0);
            }
        }
        let active = self.active.iter().copied().filter(|j| keep.contains(j)).collect();
        Self { w, active }
    }

    /// The shared row when every nonzero row of `W` is identical, i.e. when
    /// mixing leaves all receiving columns at one common aggregate.
    pub fn consensus_row(&self) -> Option<Vec<f64>> {
        let n = self.dim();
        let mut common: Option<Vec<f64>> = None;
        for i in 0..n {
            let row: Vec<f64> = (0..n).map(|j| self.w.get(i, j)).collect();
            if row.iter().all(|&x| x == 0.0) {
                continue;
            }
            match &common {
                None => common = Some(row),
                Some(c) => {
                    let same = c
                        .iter()
                        .zip(&row)
                        .all(|(a, b)| (a - b).abs() <= 1e-15 * a.abs().max(b.abs()).max(1.0));
                    if !same {
                        return None;
                    }
                }
            }
        }
        common
    }

    pub fn to_json(&self) -> MixingJson {
        MixingJson {
            dim: self.dim(),
            columns: self.w.columns(),
        }
    }

    pub fn from_json(doc: &MixingJson) -> Result<Self> {
        if doc.columns.len() != doc.dim || doc.columns.iter().any(|c| c.len() != doc.dim) {
            return Err(Error::Dimension(format!(
                "mixing document declares dim {} but columns are not {0}x{0}",
                doc.dim
            )));
        }
        let w = Self::from_dense(DenseMatrix::from_columns(&doc.columns)?)?;
        match validate(&w, COLUMN_SUM_TOL) {
            Verdict::Pass => Ok(w),
            Verdict::Fail(v) => Err(Error::config("mixing", v.to_string())),
        }
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        let doc: MixingJson = serde_json::from_reader(std::fs::File::open(path)?)?;
        Self::from_json(&doc)
    }
}

/// On-disk form: column-major `{"dim": n, "columns": [[...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingJson {
    pub dim: usize,
    pub columns: Vec<Vec<f64>>,
}

/// Active column set for `m` clients with selection `sel` and `v` auxiliaries.
pub fn active_indices(m: usize, v: usize, sel: &SelectionSet) -> Vec<usize> {
    sel.members().iter().copied().chain(m..m + v).collect()
}

/// Uniform averaging over `active`: `w_ij = 1/|active|` for i, j active.
pub fn uniform_over(n: usize, active: &[usize]) -> Result<MixingMatrix> {
    if active.is_empty() {
        return Err(Error::config("mixing", "uniform mixing needs a non-empty selection"));
    }
    if active.iter().any(|&i| i >= n) {
        return Err(Error::Dimension(format!("active index out of range 0..{n}")));
    }
    if active.len() == n {
        return MixingMatrix::from_dense(j_matrix(n)?);
    }
    let share = 1.0 / active.len() as f64;
    let mut w = DenseMatrix::zeros(n, n);
    for &i in active {
        for &j in active {
            w.set(i, j, share);
        }
    }
    let mut sorted = active.to_vec();
    sorted.sort_unstable();
    Ok(MixingMatrix { w, active: sorted })
}

/// Uniform aggregation over the selected clients and all auxiliaries.
pub fn build_uniform(m: usize, v: usize, selected: &SelectionSet) -> Result<MixingMatrix> {
    uniform_over(m + v, &active_indices(m, v, selected))
}

/// Column j of a selected client holds `D_i / D_sel` in row i of each
/// selected client.
pub fn build_dataset_proportional(sizes: &[f64], selected: &SelectionSet) -> Result<MixingMatrix> {
    let n = sizes.len();
    if selected.is_empty() {
        return Err(Error::config("mixing", "empty selection"));
    }
    if selected.members().iter().any(|&i| i >= n) {
        return Err(Error::Dimension("selected client beyond dataset sizes".into()));
    }
    if sizes.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
        return Err(Error::config("mixing.sizes", "dataset sizes must be finite and non-negative"));
    }
    let total: f64 = selected.members().iter().map(|&i| sizes[i]).sum();
    if total <= 0.0 {
        return Err(Error::config("mixing.sizes", "selected dataset sizes sum to zero"));
    }
    let mut w = DenseMatrix::zeros(n, n);
    for &j in selected.members() {
        for &i in selected.members() {
            w.set(i, j, sizes[i] / total);
        }
    }
    MixingMatrix::from_dense(w)
}

/// One Dirichlet(1, …, 1) column per active index, optionally blended
/// towards uniform averaging: `W = (1 - blend)·U + blend·D`.
pub fn random_column_stochastic(
    n: usize,
    active: &[usize],
    seed: u64,
    round: u64,
    blend: f64,
) -> Result<MixingMatrix> {
    if !(0.0..=1.0).contains(&blend) {
        return Err(Error::config("mixing.blend", format!("blend must lie in [0, 1], got {blend}")));
    }
    let uniform = uniform_over(n, active)?;
    let gamma = Gamma::new(1.0, 1.0).expect("valid gamma");
    let mut w = DenseMatrix::zeros(n, n);
    for &j in active {
        let mut rng = keyed(seed, Domain::Mixing, round, j as u64);
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = draws.iter().sum();
        for (i, g) in draws.iter().enumerate() {
            let u = uniform.w.get(i, j);
            w.set(i, j, (1.0 - blend) * u + blend * g / total);
        }
    }
    let mut sorted = active.to_vec();
    sorted.sort_unstable();
    Ok(MixingMatrix { w, active: sorted })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NotSquare { rows: usize, cols: usize },
    Negative { row: usize, col: usize, value: f64 },
    ColumnSum { col: usize, sum: f64 },
    ActiveMismatch { col: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NotSquare { rows, cols } => write!(f, "not square ({rows}x{cols})"),
            Violation::Negative { row, col, value } => {
                write!(f, "negative entry {value} at ({row}, {col})")
            }
            Violation::ColumnSum { col, sum } => {
                write!(f, "column-sum: column {col} sums to {sum}, expected 1 or 0")
            }
            Violation::ActiveMismatch { col } => {
                write!(f, "column {col} disagrees with the declared active set")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Pass,
    Fail(Violation),
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

/// Checks non-negativity and that each column sums to one or is all zeros.
pub fn validate(w: &MixingMatrix, tol: f64) -> Verdict {
    let d = &w.w;
    if !d.is_square() {
        return Verdict::Fail(Violation::NotSquare {
            rows: d.rows(),
            cols: d.cols(),
        });
    }
    let n = d.rows();
    for j in 0..n {
        for i in 0..n {
            let value = d.get(i, j);
            if value < 0.0 {
                return Verdict::Fail(Violation::Negative { row: i, col: j, value });
            }
        }
    }
    for (col, sum) in d.column_sums().into_iter().enumerate() {
        let zero = (0..n).all(|i| d.get(i, col) == 0.0);
        if zero {
            if w.active.contains(&col) {
                return Verdict::Fail(Violation::ActiveMismatch { col });
            }
            continue;
        }
        if !w.active.contains(&col) {
            return Verdict::Fail(Violation::ActiveMismatch { col });
        }
        if (sum - 1.0).abs() > tol {
            return Verdict::Fail(Violation::ColumnSum { col, sum });
        }
    }
    Verdict::Pass
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaOptions {
    /// Whether exact zeros inside a nonzero column may serve as the
    /// smallest entries. `true` evaluates the formula literally.
    pub count_structural_zeros: bool,
}

impl Default for DeltaOptions {
    fn default() -> Self {
        Self {
            count_structural_zeros: true,
        }
    }
}

/// Smallest product of the two smallest entries over all nonzero columns.
pub fn smallest_pair_product(w: &MixingMatrix, opts: DeltaOptions) -> Result<f64> {
    let n = w.dim();
    if n < 2 {
        return Err(Error::Dimension("δ needs at least two rows (m + v >= 2)".into()));
    }
    let mut best = f64::INFINITY;
    for &j in &w.active {
        let mut col: Vec<f64> = w.w.column(j);
        if !opts.count_structural_zeros {
            col.retain(|&x| x != 0.0);
        }
        let product = if col.len() < 2 {
            0.0
        } else {
            col.sort_by(f64::total_cmp);
            col[0] * col[1]
        };
        best = best.min(product);
    }
    Ok(if best.is_finite() { best } else { 0.0 })
}

/// `max(0, c(n−1)(1 − n²·t₁t₂))` with `n = m + v`.
pub fn delta_of(w: &MixingMatrix, c: f64) -> Result<f64> {
    delta_with(w, c, DeltaOptions::default())
}

pub fn delta_with(w: &MixingMatrix, c: f64, opts: DeltaOptions) -> Result<f64> {
    let t = smallest_pair_product(w, opts)?;
    let n = w.dim() as f64;
    Ok((c * (n - 1.0) * (1.0 - n * n * t)).max(0.0))
}

/// Brute-force `‖Φᵀ(I − J)‖²_F`. Equals `‖Φᵀ − J‖²_F` when no column of
/// `Φ` is zero.
pub fn consensus_deviation_sq(phi: &DenseMatrix) -> Result<f64> {
    if !phi.is_square() {
        return Err(Error::Dimension("Φ must be square".into()));
    }
    let n = phi.rows();
    let centered = DenseMatrix::identity(n).sub(&j_matrix(n)?)?;
    Ok(frobenius_norm_sq(&phi.transpose().matmul(&centered)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum ScheduleKind {
    /// The same matrix at every aggregation.
    Static(DenseMatrix),
    /// Cycles through the list, one entry per aggregation.
    PeriodicList(Vec<DenseMatrix>),
    /// Fresh Dirichlet columns per aggregation, keyed by `(seed, round)`.
    SeededRandom { seed: u64, blend: f64 },
    /// Uniform averaging over the active columns.
    UniformJ,
    /// Dataset-size weighted columns.
    Proportional { sizes: Vec<f64> },
}

/// Emits `S_k`: the mixing matrix on aggregation iterations
/// (`k mod τ == 0`), the identity otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingSchedule {
    pub kind: ScheduleKind,
    tau: usize,
}

impl MixingSchedule {
    pub fn new(kind: ScheduleKind, tau: usize) -> Result<Self> {
        if tau == 0 {
            return Err(Error::config("algorithm.tau", "communication period must be >= 1"));
        }
        if let ScheduleKind::PeriodicList(list) = &kind {
            if list.is_empty() {
                return Err(Error::config("mixing.matrices", "periodic list is empty"));
            }
        }
        Ok(Self { kind, tau })
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn is_aggregation(&self, k: usize) -> bool {
        k.is_multiple_of(self.tau)
    }

    /// `W_k` at iteration `k`, or `None` where `S_k` is the identity.
    pub fn emit(
        &self,
        k: usize,
        sel: &SelectionSet,
        m: usize,
        v: usize,
    ) -> Result<Option<MixingMatrix>> {
        if !self.is_aggregation(k) {
            return Ok(None);
        }
        let round = k / self.tau;
        let n = m + v;
        let active = active_indices(m, v, sel);
        let w = match &self.kind {
            ScheduleKind::Static(w) => MixingMatrix::from_dense(w.clone())?.masked(&active),
            ScheduleKind::PeriodicList(list) => {
                MixingMatrix::from_dense(list[round % list.len()].clone())?.masked(&active)
            }
            ScheduleKind::SeededRandom { seed, blend } => {
                random_column_stochastic(n, &active, *seed, round as u64, *blend)?
            }
            ScheduleKind::UniformJ => uniform_over(n, &active)?,
            ScheduleKind::Proportional { sizes } => {
                if v != 0 {
                    return Err(Error::config("mixing", "proportional mixing has no auxiliary rows"));
                }
                build_dataset_proportional(sizes, sel)?
            }
        };
        if w.dim() != n {
            return Err(Error::Dimension(format!(
                "mixing matrix is {0}x{0}, state has {n} columns",
                w.dim()
            )));
        }
        Ok(Some(w))
    }

    /// `S_k` as an explicit matrix.
    pub fn s_k(&self, k: usize, sel: &SelectionSet, m: usize, v: usize) -> Result<DenseMatrix> {
        Ok(match self.emit(k, sel, m, v)? {
            Some(w) => w.w,
            None => DenseMatrix::identity(m + v),
        })
    }
}
