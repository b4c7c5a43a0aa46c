//! Proximal operators of the ℓ1 and nuclear norms.

use faer::{Mat, MatRef};

use crate::error::Result;
use crate::linalg;

#[inline]
pub fn shrink(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// Entrywise `sign(m)·max(|m| − τ, 0)`, the prox of `τ‖·‖_1`.
pub fn soft_threshold(m: MatRef<'_, f64>, tau: f64) -> Mat<f64> {
    debug_assert!(tau >= 0.0);
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| shrink(m[(i, j)], tau))
}

/// Singular value thresholding, the prox of `τ‖·‖_*`.
pub fn svt(m: MatRef<'_, f64>, tau: f64) -> Result<Mat<f64>> {
    Ok(svt_with_norm(m, tau)?.0)
}

/// [`svt`] that also returns the nuclear norm of its output.
pub fn svt_with_norm(m: MatRef<'_, f64>, tau: f64) -> Result<(Mat<f64>, f64)> {
    debug_assert!(tau >= 0.0);
    let (rows, cols) = (m.nrows(), m.ncols());
    if rows == 0 || cols == 0 {
        return Ok((Mat::zeros(rows, cols), 0.0));
    }
    let svd = linalg::thin_svd(m)?;
    let s = svd.S().column_vector();
    let kept: Vec<(usize, f64)> = (0..s.nrows())
        .filter_map(|k| {
            let v = s[k] - tau;
            (v > 0.0).then_some((k, v))
        })
        .collect();
    if kept.is_empty() {
        return Ok((Mat::zeros(rows, cols), 0.0));
    }
    let u = svd.U();
    let v = svd.V();
    let us = Mat::from_fn(rows, kept.len(), |i, c| u[(i, kept[c].0)] * kept[c].1);
    let vk = Mat::from_fn(cols, kept.len(), |i, c| v[(i, kept[c].0)]);
    let nuclear = kept.iter().map(|&(_, v)| v).sum();
    Ok((&us * vk.transpose(), nuclear))
}
