// Small dense helpers shared by the estimators.

use alloc::vec::Vec;
use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};

/// Row-major copy of a matrix, for tight per-row loops.
pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (n, d) = m.shape();
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        for k in 0..d {
            out.push(m[(i, k)]);
        }
    }
    out
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    crate::math::sqrt(dot(a, a))
}

pub(crate) fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite(what.into()))
}

/// Inverse of a symmetric positive definite matrix.
pub(crate) fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let inv = cholesky(m, what)?.inverse();
    Ok(symmetrize(&inv))
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a small symmetric matrix, ascending.
pub(crate) fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals
}
