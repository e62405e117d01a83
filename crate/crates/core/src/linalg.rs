//! Small symmetric-matrix helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub const COND_LIMIT: f64 = 1e12;

/// Condition number of a symmetric matrix from its eigenvalues; infinite if not positive definite.
pub fn sym_condition(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    let mx = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mn = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(mn > 0.0) || !mx.is_finite() {
        f64::INFINITY
    } else {
        mx / mn
    }
}

/// Inverse of a symmetric positive definite matrix, or the offending condition number.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>, f64> {
    spd_inverse_limit(m, COND_LIMIT)
}

pub fn spd_inverse_limit(m: &DMatrix<f64>, limit: f64) -> Result<DMatrix<f64>, f64> {
    let cond = sym_condition(m);
    if !(cond <= limit) {
        return Err(cond);
    }
    match symmetrize(m).cholesky() {
        Some(ch) => Ok(symmetrize(&ch.inverse())),
        None => Err(f64::INFINITY),
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn quad_form(m: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
    (c.transpose() * m * c)[(0, 0)]
}

pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |r, _| v[idx[r]])
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}
