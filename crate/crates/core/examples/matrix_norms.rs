//! Frobenius and operator norms, and the ordered transpose product of a
//! mixing schedule.

use coopsgd::matrix::{frobenius_norm, j_matrix, operator_norm, phi_product, DenseMatrix, DEFAULT_NORM_TOL};

fn main() -> coopsgd::Result<()> {
    let a = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![4.0, 5.0]])?;
    println!("A = {:?}", a.entries());
    println!("‖A‖_F  = {:.6}", frobenius_norm(&a));
    println!("‖A‖_op = {:.6}", operator_norm(&a, DEFAULT_NORM_TOL)?);

    let n = 4;
    let centering = DenseMatrix::identity(n).sub(&j_matrix(n)?)?;
    println!("‖I − J‖_op for n = {n}: {:.6}", operator_norm(&centering, DEFAULT_NORM_TOL)?);

    let w1 = DenseMatrix::from_rows(&[vec![0.5, 0.2], vec![0.5, 0.8]])?;
    let w2 = DenseMatrix::from_rows(&[vec![0.9, 0.3], vec![0.1, 0.7]])?;
    let phi_t = phi_product(2, &[w1, w2])?;
    println!("W₁ᵀW₂ᵀ = {:?}", phi_t.entries());
    println!("row sums (each 1 for column-stochastic inputs): {:?}", phi_t.transpose().column_sums());
    Ok(())
}
