//! Dense helpers shared by the estimators, solvers and generators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// `(m + mᵀ) / 2`, exactly symmetric.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

/// Largest absolute entry of `m - mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..j {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn is_square(m: &DMatrix<f64>) -> bool {
    m.nrows() == m.ncols()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Verifies symmetric positive definiteness with `λ_min > floor`.
pub fn check_spd(m: &DMatrix<f64>, floor: f64, what: &str) -> Result<()> {
    if !is_square(m) {
        return Err(Error::invalid(format!("{what} is not square")));
    }
    let lmin = min_eigenvalue(m);
    if !(lmin > floor) {
        return Err(Error::NotPositiveDefinite(format!(
            "{what} has minimum eigenvalue {lmin:.3e}"
        )));
    }
    Ok(())
}

/// Inverse of a symmetric positive definite matrix via Cholesky, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(format!("{what}: Cholesky failed")))?;
    Ok(symmetrize(&chol.inverse()))
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite(format!("{what}: Cholesky failed")))
}

/// Sign and log-magnitude of `det(m)` from a partially pivoted LU factorization.
///
/// Returns `None` when a pivot is exactly zero.
pub fn signed_log_det(m: &DMatrix<f64>) -> Option<(f64, f64)> {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut sign = if lu.p().determinant::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let mut log_abs = 0.0;
    for i in 0..u.nrows() {
        let pivot = u[(i, i)];
        if pivot == 0.0 || !pivot.is_finite() {
            return None;
        }
        if pivot < 0.0 {
            sign = -sign;
        }
        log_abs += pivot.abs().ln();
    }
    Some((sign, log_abs))
}

/// Log-determinant of a symmetric positive definite matrix.
pub fn spd_log_det(m: &DMatrix<f64>, what: &str) -> Result<f64> {
    let l = cholesky_lower(m, what)?;
    Ok(2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub fn l1_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Coordinate-wise median of the rows of `data`.
pub fn coordinate_median(data: &DMatrix<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(data.ncols());
    let mut buf = Vec::with_capacity(data.nrows());
    for (j, col) in data.column_iter().enumerate() {
        buf.clear();
        buf.extend(col.iter().copied());
        buf.sort_by(f64::total_cmp);
        let n = buf.len();
        out[j] = if n % 2 == 1 {
            buf[n / 2]
        } else {
            0.5 * (buf[n / 2 - 1] + buf[n / 2])
        };
    }
    out
}

/// Row mean of `data`.
pub fn column_means(data: &DMatrix<f64>) -> DVector<f64> {
    data.row_mean().transpose()
}

/// Unbiased sample covariance (denominator `n - 1`) of the rows of `data`.
pub fn sample_covariance(data: &DMatrix<f64>) -> DMatrix<f64> {
    let n = data.nrows();
    let mean = data.row_mean();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let denom = (n.max(2) - 1) as f64;
    symmetrize(&(centered.transpose() * &centered / denom))
}
