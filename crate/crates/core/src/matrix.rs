//! Small dense real matrices: storage, products, norms and the averaging
//! matrix `J = 11ᵀ/n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Iteration cap for the power method.
pub const POWER_ITERATION_CAP: usize = 10_000;
/// Default relative tolerance for [`operator_norm`].
pub const DEFAULT_NORM_TOL: f64 = 1e-10;

/// Row-major dense matrix with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows * cols != entries.len() {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if let Some(pos) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.entries[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.entries[i * n + i] = v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let c = columns.len();
        let r = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|col| col.len() != r) {
            return Err(Error::Dimension("ragged columns".into()));
        }
        let mut entries = vec![0.0; r * c];
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                entries[i * c + j] = v;
            }
        }
        Self::new(r, c, entries)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.cols + j] = v;
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.entries.chunks_exact(self.cols.max(1)) {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.entries[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.entries[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.entries[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.entries[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "vector length mismatch");
        self.entries
            .chunks_exact(self.cols.max(1))
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Aᵀ x`
    pub fn tmul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "vector length mismatch");
        let mut out = vec![0.0; self.cols];
        for (row, &xi) in self.entries.chunks_exact(self.cols.max(1)).zip(x) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * xi;
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|v| v * s).collect(),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "shape mismatch {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }
}

/// The n×n averaging matrix with every entry `1/n`.
pub fn j_matrix(n: usize) -> Result<DenseMatrix> {
    if n == 0 {
        return Err(Error::Dimension("J needs n >= 1".into()));
    }
    Ok(DenseMatrix {
        rows: n,
        cols: n,
        entries: vec![1.0 / n as f64; n * n],
    })
}

pub fn frobenius_norm_sq(a: &DenseMatrix) -> f64 {
    a.entries.iter().map(|v| v * v).sum()
}

pub fn frobenius_norm(a: &DenseMatrix) -> f64 {
    frobenius_norm_sq(a).sqrt()
}

/// Largest singular value by power iteration on `AᵀA`.
///
/// Starts from the normalized all-ones vector. Because that vector is
/// annihilated by matrices such as `I - J`, a second pass from a fixed
/// generic vector is run and the larger estimate is kept.
pub fn operator_norm(a: &DenseMatrix, tol: f64) -> Result<f64> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let n = a.cols;
    if n == 0 || a.rows == 0 {
        return Ok(0.0);
    }
    let ones = vec![1.0; n];
    let generic: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.754_877_666).sin() + 1.5).collect();
    let first = power_iterate(a, ones, tol)?;
    let second = power_iterate(a, generic, tol)?;
    Ok(first.max(second).sqrt())
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Dominant eigenvalue of `AᵀA` from the given start.
fn power_iterate(a: &DenseMatrix, mut v: Vec<f64>, tol: f64) -> Result<f64> {
    normalize(&mut v);
    let mut prev = f64::NAN;
    for _ in 0..POWER_ITERATION_CAP {
        let mut w = a.tmul_vec(&a.mul_vec(&v));
        let rayleigh: f64 = w.iter().zip(&v).map(|(x, y)| x * y).sum();
        let norm = normalize(&mut w);
        if norm == 0.0 {
            return Ok(0.0);
        }
        if (rayleigh - prev).abs() <= tol * rayleigh.abs() {
            return Ok(rayleigh);
        }
        prev = rayleigh;
        v = w;
    }
    Err(Error::Numerical(format!(
        "power iteration did not converge in {POWER_ITERATION_CAP} iterations"
    )))
}

/// Ordered transpose product `W_sᵀ W_{s+1}ᵀ ... W_kᵀ`; the identity when
/// `schedule` is empty.
pub fn phi_product(n: usize, schedule: &[DenseMatrix]) -> Result<DenseMatrix> {
    let mut acc = DenseMatrix::identity(n);
    for (idx, w) in schedule.iter().enumerate() {
        if w.rows != n || w.cols != n {
            return Err(Error::Dimension(format!(
                "schedule entry {idx} is {}x{}, expected {n}x{n}",
                w.rows, w.cols
            )));
        }
        acc = acc.matmul(&w.transpose())?;
    }
    Ok(acc)
}
