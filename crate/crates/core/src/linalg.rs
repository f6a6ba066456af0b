//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition numbers above this are treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Ratio of the largest to smallest absolute eigenvalue of a symmetric matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(symmetrize(m));
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
    if lo == 0.0 || !lo.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Solves `A X = B` for symmetric `A` after a condition-number guard.
///
/// Uses Cholesky when `A` is positive definite and falls back to LU otherwise.
pub fn solve_symmetric(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let condition = condition_number(a);
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::Singular { what, condition });
    }
    let a = symmetrize(a);
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    a.lu().solve(b).ok_or(Error::Singular { what, condition })
}

pub fn solve_symmetric_vec(a: &DMatrix<f64>, b: &DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    let x = solve_symmetric(a, &DMatrix::from_column_slice(b.len(), 1, b.as_slice()), what)?;
    Ok(x.column(0).into_owned())
}

/// Numerical rank from singular values, relative tolerance `tol`.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().copied().fold(0.0_f64, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > tol * top).count()
}
