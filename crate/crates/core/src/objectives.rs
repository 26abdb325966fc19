//! Synthetic objectives with known constants and their stochastic
//! gradient oracles.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::{operator_norm, DenseMatrix, DEFAULT_NORM_TOL};
use crate::rng::{keyed, Domain};

/// Per-client losses `F_i`, their average `F`, and a stochastic gradient
/// oracle whose draws are keyed by `(seed, client, iteration)`.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn clients(&self) -> usize;
    fn client_loss(&self, client: usize, x: &[f64]) -> f64;
    fn client_grad(&self, client: usize, x: &[f64]) -> Vec<f64>;
    fn stochastic_grad(&self, seed: u64, client: usize, x: &[f64], iteration: usize) -> Vec<f64>;
    /// Smoothness constant (an upper bound where not exact).
    fn smoothness(&self) -> f64;
    /// Known lower bound on `F`, if any.
    fn f_inf(&self) -> Option<f64>;
    /// Exact gradient-noise level if the oracle has one.
    fn sigma(&self) -> Option<f64>;
    /// Exact dissimilarity `κ²` if it does not depend on `x`.
    fn kappa_sq(&self) -> Option<f64>;

    fn global_loss(&self, x: &[f64]) -> f64 {
        let m = self.clients();
        (0..m).map(|i| self.client_loss(i, x)).sum::<f64>() / m as f64
    }

    fn global_grad(&self, x: &[f64]) -> Vec<f64> {
        let m = self.clients();
        let mut g = vec![0.0; self.dim()];
        for i in 0..m {
            for (a, b) in g.iter_mut().zip(self.client_grad(i, x)) {
                *a += b;
            }
        }
        g.iter_mut().for_each(|a| *a /= m as f64);
        g
    }

    /// `(1/m) Σ ‖∇F_i(x) − ∇F(x)‖²`
    fn dissimilarity_at(&self, x: &[f64]) -> f64 {
        let g = self.global_grad(x);
        let m = self.clients();
        (0..m)
            .map(|i| {
                self.client_grad(i, x)
                    .iter()
                    .zip(&g)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / m as f64
    }

    /// Monte Carlo estimate of `E‖g_i(x) − ∇F_i(x)‖²` averaged over clients.
    fn noise_variance_at(&self, seed: u64, x: &[f64], draws: usize) -> f64 {
        let m = self.clients();
        let mut total = 0.0;
        for i in 0..m {
            let exact = self.client_grad(i, x);
            for t in 0..draws {
                let g = self.stochastic_grad(seed, i, x, t);
                total += g.iter().zip(&exact).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
        }
        total / (m * draws.max(1)) as f64
    }
}

/// Oracle handle binding an objective to a noise seed.
#[derive(Clone, Copy)]
pub struct GradientOracle<'a> {
    pub objective: &'a dyn Objective,
    pub seed: u64,
}

impl<'a> GradientOracle<'a> {
    pub fn new(objective: &'a dyn Objective, seed: u64) -> Self {
        Self { objective, seed }
    }

    pub fn grad(&self, client: usize, x: &[f64], iteration: usize) -> Vec<f64> {
        self.objective.stochastic_grad(self.seed, client, x, iteration)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gaussian_vec(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `F_i(x) = ½xᵀAx − b_iᵀx` with a Hessian shared by all clients.
#[derive(Debug, Clone)]
pub struct QuadraticSuite {
    a: DenseMatrix,
    b: Vec<Vec<f64>>,
    b_mean: Vec<f64>,
    sigma: f64,
    smoothness: f64,
    minimizer: Option<Vec<f64>>,
}

impl QuadraticSuite {
    /// Builds from an explicit Hessian and linear terms.
    pub fn from_parts(a: DenseMatrix, b: Vec<Vec<f64>>, sigma: f64) -> Result<Self> {
        let d = a.rows();
        if !a.is_square() || d == 0 {
            return Err(Error::Dimension("Hessian must be square and non-empty".into()));
        }
        if b.is_empty() || b.iter().any(|bi| bi.len() != d) {
            return Err(Error::Dimension("each linear term needs length d".into()));
        }
        for i in 0..d {
            for j in 0..i {
                if (a.get(i, j) - a.get(j, i)).abs() > 1e-12 {
                    return Err(Error::Domain("Hessian is not symmetric".into()));
                }
            }
        }
        if !(sigma >= 0.0) {
            return Err(Error::Domain("sigma must be non-negative".into()));
        }
        let b_mean = mean_vec(&b);
        let minimizer = cholesky_solve(&a, &b_mean);
        let smoothness = operator_norm(&a, DEFAULT_NORM_TOL)?;
        Ok(Self {
            a,
            b,
            b_mean,
            sigma,
            smoothness,
            minimizer,
        })
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn hessian(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn linear_terms(&self) -> &[Vec<f64>] {
        &self.b
    }

    pub fn linear_mean(&self) -> &[f64] {
        &self.b_mean
    }

    /// `A⁻¹b̄` when `A` is positive definite.
    pub fn minimizer(&self) -> Option<&[f64]> {
        self.minimizer.as_deref()
    }
}

fn mean_vec(vs: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; vs[0].len()];
    for v in vs {
        for (a, b) in m.iter_mut().zip(v) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|a| *a /= vs.len() as f64);
    m
}

/// Solves `Ax = b` for symmetric positive definite `A`; `None` otherwise.
fn cholesky_solve(a: &DenseMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 1e-14 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    Some(x)
}

/// Rows of a seeded Haar-like orthogonal matrix (Gram–Schmidt on Gaussians).
fn random_orthogonal(d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d);
    while rows.len() < d {
        let mut v = gaussian_vec(rng, d);
        for q in &rows {
            let p = dot(&v, q);
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= p * b);
        }
        let norm = dot(&v, &v).sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        rows.push(v);
    }
    rows
}

/// Quadratic suite with Hessian `QᵀΛQ` and client offsets scaled so that
/// `(1/m)Σ‖b_i − b̄‖² = kappa_target²`. Noise starts at zero; see
/// [`QuadraticSuite::with_sigma`].
pub fn make_quadratic(
    d: usize,
    m: usize,
    spectrum: &[f64],
    kappa_target: f64,
    seed: u64,
) -> Result<QuadraticSuite> {
    if d == 0 || m == 0 {
        return Err(Error::config("objective", "need d >= 1 and m >= 1"));
    }
    if spectrum.len() != d {
        return Err(Error::config(
            "objective.spectrum",
            format!("spectrum has {} entries, dimension is {d}", spectrum.len()),
        ));
    }
    if spectrum.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::config("objective.spectrum", "eigenvalues must be finite and >= 0"));
    }
    if !(kappa_target >= 0.0) {
        return Err(Error::config("objective.kappa", "kappa must be >= 0"));
    }
    if kappa_target > 0.0 && m == 1 {
        return Err(Error::Infeasible("a single client cannot have positive dissimilarity".into()));
    }
    let mut rng = keyed(seed, Domain::Problem, 0, 0);
    let q = random_orthogonal(d, &mut rng);
    let mut a = DenseMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let v: f64 = (0..d).map(|k| q[k][i] * spectrum[k] * q[k][j]).sum();
            a.set(i, j, v);
        }
    }
    // exact symmetry
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    let b_mean = gaussian_vec(&mut rng, d);
    let mut offsets: Vec<Vec<f64>> = (0..m).map(|_| gaussian_vec(&mut rng, d)).collect();
    if kappa_target > 0.0 {
        let centre = mean_vec(&offsets);
        for r in &mut offsets {
            r.iter_mut().zip(&centre).for_each(|(a, c)| *a -= c);
        }
        let spread = offsets.iter().map(|r| dot(r, r)).sum::<f64>() / m as f64;
        let scale = kappa_target / spread.sqrt();
        for r in &mut offsets {
            r.iter_mut().for_each(|a| *a *= scale);
        }
    } else {
        offsets.iter_mut().for_each(|r| r.fill(0.0));
    }
    let b: Vec<Vec<f64>> = offsets
        .iter()
        .map(|r| b_mean.iter().zip(r).map(|(x, y)| x + y).collect())
        .collect();

    let lambda_min = spectrum.iter().copied().fold(f64::INFINITY, f64::min);
    let b_bar = if kappa_target > 0.0 { mean_vec(&b) } else { b_mean };
    let minimizer = (lambda_min > 0.0).then(|| {
        let mut x = vec![0.0; d];
        for (qk, &lk) in q.iter().zip(spectrum) {
            let coef = dot(qk, &b_bar) / lk;
            x.iter_mut().zip(qk).for_each(|(a, b)| *a += coef * b);
        }
        x
    });
    Ok(QuadraticSuite {
        a,
        b,
        b_mean: b_bar,
        sigma: 0.0,
        smoothness: spectrum.iter().copied().fold(0.0, f64::max),
        minimizer,
    })
}

impl Objective for QuadraticSuite {
    fn dim(&self) -> usize {
        self.a.rows()
    }

    fn clients(&self) -> usize {
        self.b.len()
    }

    fn client_loss(&self, client: usize, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.a.mul_vec(x)) - dot(&self.b[client], x)
    }

    fn client_grad(&self, client: usize, x: &[f64]) -> Vec<f64> {
        let mut g = self.a.mul_vec(x);
        g.iter_mut().zip(&self.b[client]).for_each(|(a, b)| *a -= b);
        g
    }

    fn global_loss(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.a.mul_vec(x)) - dot(&self.b_mean, x)
    }

    fn global_grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.a.mul_vec(x);
        g.iter_mut().zip(&self.b_mean).for_each(|(a, b)| *a -= b);
        g
    }

    /// Adds `N(0, σ²/d · I)`, so the expected squared deviation is `σ²`.
    fn stochastic_grad(&self, seed: u64, client: usize, x: &[f64], iteration: usize) -> Vec<f64> {
        let mut g = self.client_grad(client, x);
        if self.sigma > 0.0 {
            let mut rng = keyed(seed, Domain::GradientNoise, client as u64, iteration as u64);
            let scale = self.sigma / (g.len() as f64).sqrt();
            for gi in &mut g {
                *gi += scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        g
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn f_inf(&self) -> Option<f64> {
        self.minimizer.as_ref().map(|x| self.global_loss(x))
    }

    fn sigma(&self) -> Option<f64> {
        Some(self.sigma)
    }

    fn kappa_sq(&self) -> Option<f64> {
        let m = self.b.len() as f64;
        Some(
            self.b
                .iter()
                .map(|bi| {
                    bi.iter()
                        .zip(&self.b_mean)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / m,
        )
    }
}

/// Samples assigned to clients: IID shuffle or Dirichlet label skew.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Partition {
    Iid,
    Dirichlet { alpha: f64 },
}

/// Splits sample indices across `m` clients with label skew.
///
/// Each client draws a class mix `q_i ~ Dirichlet(α·1)`; the samples of
/// class `y` are then divided among clients in proportion to `q_{i,y}`.
/// Every index lands on exactly one client and no client is left empty.
pub fn partition_dirichlet(labels: &[usize], m: usize, alpha: f64, seed: u64) -> Result<Vec<Vec<usize>>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::config("objective.alpha", format!("alpha must be positive, got {alpha}")));
    }
    if labels.len() < m || m == 0 {
        return Err(Error::config(
            "objective.samples",
            format!("{} samples cannot cover {m} clients", labels.len()),
        ));
    }
    let classes = labels.iter().copied().max().map_or(0, |c| c + 1);
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    let mix: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut rng = keyed(seed, Domain::Partition, 0, i as u64);
            let g: Vec<f64> = (0..classes).map(|_| gamma.sample(&mut rng).max(1e-300)).collect();
            let s: f64 = g.iter().sum();
            g.into_iter().map(|x| x / s).collect()
        })
        .collect();

    let mut parts = vec![Vec::new(); m];
    for class in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let mut rng = keyed(seed, Domain::Partition, 1, class as u64);
        idx.shuffle(&mut rng);
        let weights: Vec<f64> = mix.iter().map(|q| q[class]).collect();
        let total: f64 = weights.iter().sum();
        let mut start = 0;
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            let end = if i + 1 == m {
                idx.len()
            } else {
                ((acc / total) * idx.len() as f64).round() as usize
            };
            let end = end.clamp(start, idx.len());
            parts[i].extend_from_slice(&idx[start..end]);
            start = end;
        }
    }
    // move one sample from the largest client into each empty one
    while let Some(empty) = parts.iter().position(Vec::is_empty) {
        let donor = (0..m).max_by_key(|&i| parts[i].len()).expect("m >= 1");
        let moved = parts[donor].pop().expect("donor has samples");
        parts[empty].push(moved);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

fn partition_iid(n: usize, m: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n < m || m == 0 {
        return Err(Error::config("objective.samples", format!("{n} samples cannot cover {m} clients")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut keyed(seed, Domain::Partition, 2, 0));
    let mut parts = vec![Vec::new(); m];
    for (pos, i) in idx.into_iter().enumerate() {
        parts[pos % m].push(i);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

/// Binary logistic regression split across clients, with optional ridge.
#[derive(Debug, Clone)]
pub struct LogisticSuite {
    /// `features[i]` holds client i's rows.
    features: Vec<Vec<Vec<f64>>>,
    labels: Vec<Vec<f64>>,
    batch: usize,
    ridge: f64,
    smoothness: f64,
}

#[derive(Debug, Clone)]
pub struct LogisticSpec {
    pub dim: usize,
    pub clients: usize,
    pub samples: usize,
    pub partition: Partition,
    pub batch: usize,
    pub ridge: f64,
    /// Distance between the two class means.
    pub separation: f64,
    pub seed: u64,
}

impl LogisticSuite {
    /// Two Gaussian classes with means `±separation/2·w*` for a seeded unit
    /// direction `w*`; the last feature is a constant bias term.
    pub fn generate(spec: &LogisticSpec) -> Result<Self> {
        if spec.dim < 2 {
            return Err(Error::config("objective.dim", "logistic needs dim >= 2 (one bias feature)"));
        }
        let mut rng = keyed(spec.seed, Domain::Problem, 1, 0);
        let p = spec.dim - 1;
        let mut dir = gaussian_vec(&mut rng, p);
        let norm = dot(&dir, &dir).sqrt();
        dir.iter_mut().for_each(|a| *a /= norm);
        let mut rows = Vec::with_capacity(spec.samples);
        let mut labels = Vec::with_capacity(spec.samples);
        for _ in 0..spec.samples {
            let y = usize::from(rng.gen::<bool>());
            let sign = if y == 1 { 0.5 } else { -0.5 };
            let mut x: Vec<f64> = gaussian_vec(&mut rng, p)
                .into_iter()
                .zip(&dir)
                .map(|(z, w)| z + sign * spec.separation * w)
                .collect();
            x.push(1.0);
            rows.push(x);
            labels.push(y);
        }
        Self::from_samples(rows, labels, spec)
    }

    /// Reads rows `features..., label` (no header); a bias column is appended.
    pub fn from_csv(path: &Path, spec: &LogisticSpec) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let values: Vec<f64> = record
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::config("objective.csv", format!("line {}: {e}", line + 1)))?;
            let (label, feats) = values
                .split_last()
                .ok_or_else(|| Error::config("objective.csv", format!("line {} is empty", line + 1)))?;
            if *label != 0.0 && *label != 1.0 {
                return Err(Error::config("objective.csv", format!("line {}: label must be 0 or 1", line + 1)));
            }
            let mut x = feats.to_vec();
            x.push(1.0);
            rows.push(x);
            labels.push(*label as usize);
        }
        if let Some(first) = rows.first() {
            if rows.iter().any(|r| r.len() != first.len()) {
                return Err(Error::config("objective.csv", "rows have differing feature counts"));
            }
        }
        Self::from_samples(rows, labels, spec)
    }

    fn from_samples(rows: Vec<Vec<f64>>, labels: Vec<usize>, spec: &LogisticSpec) -> Result<Self> {
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite feature".into()));
        }
        let parts = match spec.partition {
            Partition::Iid => partition_iid(rows.len(), spec.clients, spec.seed)?,
            Partition::Dirichlet { alpha } => partition_dirichlet(&labels, spec.clients, alpha, spec.seed)?,
        };
        let features: Vec<Vec<Vec<f64>>> = parts
            .iter()
            .map(|p| p.iter().map(|&i| rows[i].clone()).collect())
            .collect();
        let ys: Vec<Vec<f64>> = parts
            .iter()
            .map(|p| p.iter().map(|&i| labels[i] as f64).collect())
            .collect();
        let mut smoothness: f64 = 0.0;
        for xs in &features {
            let d = xs[0].len();
            let mut gram = DenseMatrix::zeros(d, d);
            for x in xs {
                for i in 0..d {
                    for j in 0..d {
                        gram.set(i, j, gram.get(i, j) + x[i] * x[j] / xs.len() as f64);
                    }
                }
            }
            smoothness = smoothness.max(0.25 * operator_norm(&gram, 1e-8)? + spec.ridge);
        }
        Ok(Self {
            features,
            labels: ys,
            batch: spec.batch,
            ridge: spec.ridge,
            smoothness,
        })
    }

    pub fn client_sizes(&self) -> Vec<usize> {
        self.labels.iter().map(Vec::len).collect()
    }

    /// Per-client label histograms (class 0, class 1).
    pub fn label_counts(&self) -> Vec<[usize; 2]> {
        self.labels
            .iter()
            .map(|ys| {
                let ones = ys.iter().filter(|&&y| y == 1.0).count();
                [ys.len() - ones, ones]
            })
            .collect()
    }

    fn sample_grad(&self, client: usize, s: usize, x: &[f64], out: &mut [f64], weight: f64) {
        let row = &self.features[client][s];
        let p = sigmoid(dot(row, x));
        let r = (p - self.labels[client][s]) * weight;
        out.iter_mut().zip(row).for_each(|(o, a)| *o += r * a);
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl Objective for LogisticSuite {
    fn dim(&self) -> usize {
        self.features[0][0].len()
    }

    fn clients(&self) -> usize {
        self.features.len()
    }

    fn client_loss(&self, client: usize, x: &[f64]) -> f64 {
        let xs = &self.features[client];
        let ys = &self.labels[client];
        let ce: f64 = xs
            .iter()
            .zip(ys)
            .map(|(row, &y)| {
                let z = dot(row, x);
                softplus(z) - y * z
            })
            .sum::<f64>()
            / xs.len() as f64;
        ce + 0.5 * self.ridge * dot(x, x)
    }

    fn client_grad(&self, client: usize, x: &[f64]) -> Vec<f64> {
        let n = self.features[client].len();
        let mut g: Vec<f64> = x.iter().map(|v| self.ridge * v).collect();
        for s in 0..n {
            self.sample_grad(client, s, x, &mut g, 1.0 / n as f64);
        }
        g
    }

    /// Minibatch of `batch` samples drawn with replacement; the full
    /// gradient when `batch` is zero or covers the client's data.
    fn stochastic_grad(&self, seed: u64, client: usize, x: &[f64], iteration: usize) -> Vec<f64> {
        let n = self.features[client].len();
        if self.batch == 0 || self.batch >= n {
            return self.client_grad(client, x);
        }
        let mut rng = keyed(seed, Domain::Minibatch, client as u64, iteration as u64);
        let mut g: Vec<f64> = x.iter().map(|v| self.ridge * v).collect();
        for _ in 0..self.batch {
            let s = rng.gen_range(0..n);
            self.sample_grad(client, s, x, &mut g, 1.0 / self.batch as f64);
        }
        g
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// Cross-entropy plus ridge is non-negative.
    fn f_inf(&self) -> Option<f64> {
        Some(0.0)
    }

    fn sigma(&self) -> Option<f64> {
        None
    }

    fn kappa_sq(&self) -> Option<f64> {
        None
    }
}
