//! The d×(m+v) state matrix: client models followed by auxiliary variables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMatrix {
    d: usize,
    m: usize,
    v: usize,
    columns: Vec<Vec<f64>>,
}

impl StateMatrix {
    pub fn zeros(d: usize, m: usize, v: usize) -> Self {
        Self {
            d,
            m,
            v,
            columns: vec![vec![0.0; d]; m + v],
        }
    }

    /// Every column (clients and auxiliaries) set to `point`.
    pub fn replicated(point: &[f64], m: usize, v: usize) -> Self {
        Self {
            d: point.len(),
            m,
            v,
            columns: vec![point.to_vec(); m + v],
        }
    }

    pub fn from_columns(m: usize, v: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.len() != m + v {
            return Err(Error::Dimension(format!(
                "expected {} columns, got {}",
                m + v,
                columns.len()
            )));
        }
        let d = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != d) {
            return Err(Error::Dimension("ragged state columns".into()));
        }
        if columns.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite state entry".into()));
        }
        Ok(Self { d, m, v, columns })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn clients(&self) -> usize {
        self.m
    }

    pub fn aux(&self) -> usize {
        self.v
    }

    pub fn width(&self) -> usize {
        self.m + self.v
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    pub fn column_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.columns[i]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.d, self.width());
        for (j, col) in self.columns.iter().enumerate() {
            for (i, &x) in col.iter().enumerate() {
                out.set(i, j, x);
            }
        }
        out
    }

    /// `u = X·1/(m+v)`
    pub fn averaged_model(&self) -> Vec<f64> {
        let mut u = vec![0.0; self.d];
        for col in &self.columns {
            for (a, x) in u.iter_mut().zip(col) {
                *a += x;
            }
        }
        let n = self.width() as f64;
        u.iter_mut().for_each(|a| *a /= n);
        u
    }

    /// Mean of the client columns only.
    pub fn client_mean(&self) -> Vec<f64> {
        let mut u = vec![0.0; self.d];
        for col in &self.columns[..self.m] {
            for (a, x) in u.iter_mut().zip(col) {
                *a += x;
            }
        }
        u.iter_mut().for_each(|a| *a /= self.m as f64);
        u
    }

    /// `‖X(I−J)‖²_F`, the spread of all columns around their mean.
    pub fn consensus_sq(&self) -> f64 {
        let u = self.averaged_model();
        self.columns
            .iter()
            .map(|c| c.iter().zip(&u).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
            .sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.columns.iter().flatten().map(|x| x * x).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.columns.iter().flatten().fold(0.0_f64, |a, x| a.max(x.abs()))
    }

    /// `X - eta * G`
    pub fn axpy(&mut self, eta: f64, g: &StateMatrix) {
        for (xc, gc) in self.columns.iter_mut().zip(&g.columns) {
            for (x, gi) in xc.iter_mut().zip(gc) {
                *x -= eta * gi;
            }
        }
    }

    /// `X Sᵀ`: column j of the result is `Σ_i s_{ji} x_i`.
    pub fn mix(&self, s: &DenseMatrix) -> Result<Self> {
        let n = self.width();
        if s.rows() != n || s.cols() != n {
            return Err(Error::Dimension(format!(
                "mixing matrix is {}x{}, state has {n} columns",
                s.rows(),
                s.cols()
            )));
        }
        let mut columns = vec![vec![0.0; self.d]; n];
        for (j, out) in columns.iter_mut().enumerate() {
            for (i, col) in self.columns.iter().enumerate() {
                let w = s.get(j, i);
                if w == 0.0 {
                    continue;
                }
                for (o, x) in out.iter_mut().zip(col) {
                    *o += w * x;
                }
            }
        }
        Ok(Self {
            d: self.d,
            m: self.m,
            v: self.v,
            columns,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::j_matrix;

    #[test]
    fn averaged_model_examples() {
        let w = vec![1.0, -2.0];
        let x = StateMatrix::replicated(&w, 3, 1);
        assert_eq!(x.averaged_model(), w);
        assert_eq!(StateMatrix::zeros(2, 3, 0).averaged_model(), vec![0.0, 0.0]);

        let mut z = StateMatrix::replicated(&w, 4, 0);
        z.column_mut(1).fill(0.0);
        let u = z.averaged_model();
        assert!((u[0] - 0.75).abs() < 1e-15 && (u[1] + 1.5).abs() < 1e-15);
    }

    #[test]
    fn averaged_model_matches_naive_mean() {
        let cols = vec![vec![0.3, 1.0], vec![-1.2, 4.0], vec![2.5, 0.5]];
        let x = StateMatrix::from_columns(2, 1, cols.clone()).unwrap();
        let u = x.averaged_model();
        for r in 0..2 {
            let naive = (cols[0][r] + cols[1][r] + cols[2][r]) / 3.0;
            assert!((u[r] - naive).abs() < 1e-15);
        }
    }

    #[test]
    fn mix_with_j_reaches_consensus() {
        let x = StateMatrix::from_columns(3, 0, vec![vec![1.0], vec![2.0], vec![6.0]]).unwrap();
        let y = x.mix(&j_matrix(3).unwrap()).unwrap();
        assert!(y.columns().iter().all(|c| (c[0] - 3.0).abs() < 1e-15));
        assert!(y.consensus_sq() < 1e-18);
    }

    #[test]
    fn mix_agrees_with_dense_product() {
        let x = StateMatrix::from_columns(2, 1, vec![vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.0]])
            .unwrap();
        let s = DenseMatrix::from_rows(&[
            vec![0.2, 0.5, 0.1],
            vec![0.3, 0.25, 0.6],
            vec![0.5, 0.25, 0.3],
        ])
        .unwrap();
        let got = x.mix(&s).unwrap().to_dense();
        let want = x.to_dense().matmul(&s.transpose()).unwrap();
        for (a, b) in got.entries().iter().zip(want.entries()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
