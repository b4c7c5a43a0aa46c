//! Small dense helpers shared by the numerical modules.

use faer::linalg::solvers::Svd;
use faer::{Mat, MatRef};

use crate::error::{Error, Result};

/// Largest absolute entry, `‖M‖_∞` in the entrywise sense. Zero for empty matrices.
pub fn max_abs(m: MatRef<'_, f64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            best = best.max(m[(i, j)].abs());
        }
    }
    best
}

pub fn frobenius(m: MatRef<'_, f64>) -> f64 {
    m.norm_l2()
}

/// Sum of absolute entries.
pub fn l1_norm(m: MatRef<'_, f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc += m[(i, j)].abs();
        }
    }
    acc
}

pub fn column_norms(m: MatRef<'_, f64>) -> Vec<f64> {
    (0..m.ncols()).map(|j| m.col(j).norm_l2()).collect()
}

pub fn check_finite(m: MatRef<'_, f64>, what: &str) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite(format!("{what}[{i}, {j}]")));
            }
        }
    }
    Ok(())
}

fn matrix_stats(m: MatRef<'_, f64>) -> String {
    format!(
        "{}x{} matrix, frobenius {:e}, max-abs {:e}",
        m.nrows(),
        m.ncols(),
        frobenius(m),
        max_abs(m)
    )
}

/// Economy-size SVD with singular values sorted in non-increasing order.
pub fn thin_svd(m: MatRef<'_, f64>) -> Result<Svd<f64>> {
    m.thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD failed ({e:?}) on {}", matrix_stats(m))))
}

/// Singular values in non-increasing order.
pub fn singular_values(m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    let mut sv = m
        .singular_values()
        .map_err(|e| Error::Numerical(format!("SVD failed ({e:?}) on {}", matrix_stats(m))))?;
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Spectral norm `σ_max(M)`.
pub fn spectral_norm(m: MatRef<'_, f64>) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// Copy the first `k` columns of `m`.
pub fn leading_columns(m: MatRef<'_, f64>, k: usize) -> Mat<f64> {
    Mat::from_fn(m.nrows(), k, |i, j| m[(i, j)])
}

/// Orthonormal basis for the column space of a full-column-rank matrix (thin Q of a QR).
pub fn orthonormal_columns(m: MatRef<'_, f64>) -> Mat<f64> {
    m.qr().compute_thin_Q()
}

pub fn shape_check(what: &str, expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(Error::Shape(format!(
            "{what}: expected {}x{}, got {}x{}",
            expected.0, expected.1, got.0, got.1
        )));
    }
    Ok(())
}
