//! Reference implementations used only by tests. They avoid the library's SVD and QR
//! paths: decompositions here are cyclic Jacobi on small symmetric matrices.

#![allow(dead_code)]

use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn max_abs_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    m
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix by cyclic Jacobi.
pub fn jacobi_eigen(sym: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = sym.len();
    let mut a: Vec<Vec<f64>> = sym.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let vals = order.iter().map(|&k| a[k][k]).collect();
    let vecs = order
        .iter()
        .map(|&k| (0..n).map(|i| v[i][k]).collect())
        .collect();
    (vals, vecs)
}

fn gram(m: MatRef<'_, f64>) -> Vec<Vec<f64>> {
    let n = m.ncols();
    (0..n)
        .map(|p| {
            (0..n)
                .map(|q| (0..m.nrows()).map(|t| m[(t, p)] * m[(t, q)]).sum())
                .collect()
        })
        .collect()
}

/// `argmin_x ½(x − y)² + τ|x|` by golden-section search on a bracketing interval.
pub fn soft_threshold_oracle(y: f64, tau: f64) -> f64 {
    let obj = |x: f64| 0.5 * (x - y).powi(2) + tau * x.abs();
    let (mut lo, mut hi) = (-y.abs() - 1.0, y.abs() + 1.0);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if obj(a) <= obj(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let mid = 0.5 * (lo + hi);
    // The minimizer sits at the kink whenever |y| ≤ τ.
    if obj(0.0) <= obj(mid) {
        0.0
    } else {
        mid
    }
}

pub fn nuclear_norm_oracle(m: MatRef<'_, f64>) -> f64 {
    let (vals, _) = jacobi_eigen(&gram(m));
    // Rounding leaves zero eigenvalues near 1e-16, whose square roots are not negligible.
    let top = vals.last().copied().unwrap_or(0.0);
    vals.iter().filter(|&&l| l > 1e-13 * top).map(|&l| l.sqrt()).sum()
}

pub fn spectral_norm_oracle(m: MatRef<'_, f64>) -> f64 {
    let (vals, _) = jacobi_eigen(&gram(m));
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Proximal point of `τ‖·‖_*` at `m`, assembled from the eigenvectors of `mᵀm`.
pub fn svt_oracle(m: MatRef<'_, f64>, tau: f64) -> Mat<f64> {
    let (vals, vecs) = jacobi_eigen(&gram(m));
    let mut out = Mat::<f64>::zeros(m.nrows(), m.ncols());
    for (lam, v) in vals.iter().zip(&vecs) {
        let sigma = lam.max(0.0).sqrt();
        if sigma <= tau || sigma == 0.0 {
            continue;
        }
        let w = (sigma - tau) / sigma;
        for i in 0..m.nrows() {
            let mv: f64 = (0..m.ncols()).map(|k| m[(i, k)] * v[k]).sum();
            for j in 0..m.ncols() {
                out[(i, j)] += w * mv * v[j];
            }
        }
    }
    out
}

/// Gap in the optimality conditions of `argmin_X ½‖X − M‖² + τ‖X‖_*`:
/// `‖M − X‖₂ ≤ τ` and `⟨M − X, X⟩ = τ‖X‖_*`. Returns the larger violation.
pub fn svt_optimality_gap(m: MatRef<'_, f64>, x: MatRef<'_, f64>, tau: f64) -> f64 {
    let g = Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - x[(i, j)]);
    let spectral = spectral_norm_oracle(g.as_ref());
    let inner: f64 = (0..m.ncols())
        .flat_map(|j| (0..m.nrows()).map(move |i| (i, j)))
        .map(|(i, j)| g[(i, j)] * x[(i, j)])
        .sum();
    (spectral - tau).max(0.0).max((inner - tau * nuclear_norm_oracle(x)).abs())
}

/// Orthonormal basis of the span of `cols` by modified Gram-Schmidt (twice).
pub fn orthonormalize(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for c in cols {
        let mut v = c.clone();
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-10 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// `μ` from the explicit `(f·nm) × (f·nm)` projector applied to a basis of `Ω_R`.
pub fn mu_dense_oracle(
    u: MatRef<'_, f64>,
    v: MatRef<'_, f64>,
    r: MatRef<'_, f64>,
    support: &[(usize, usize)],
) -> f64 {
    let (f, nm) = (u.nrows(), v.nrows());
    let proj = |m: MatRef<'_, f64>| -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| {
                (0..m.nrows())
                    .map(|j| (0..m.ncols()).map(|k| m[(i, k)] * m[(j, k)]).sum())
                    .collect()
            })
            .collect()
    };
    let (pu, pv) = (proj(u), proj(v));
    // vec index of (row a, col b) is b·f + a
    let p_phi = |z: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; f * nm];
        for b in 0..nm {
            for a in 0..f {
                let mut acc = 0.0;
                for a2 in 0..f {
                    acc += pu[a][a2] * z[b * f + a2];
                }
                for b2 in 0..nm {
                    acc += z[b2 * f + a] * pv[b2][b];
                }
                for a2 in 0..f {
                    for b2 in 0..nm {
                        acc -= pu[a][a2] * z[b2 * f + a2] * pv[b2][b];
                    }
                }
                out[b * f + a] = acc;
            }
        }
        out
    };
    let generators: Vec<Vec<f64>> = support
        .iter()
        .map(|&(i, j)| {
            let mut z = vec![0.0; f * nm];
            for a in 0..f {
                z[j * f + a] = r[(a, i)];
            }
            z
        })
        .collect();
    let q = orthonormalize(&generators);
    let images: Vec<Vec<f64>> = q.iter().map(|c| p_phi(c)).collect();
    let k = images.len();
    let g: Vec<Vec<f64>> = (0..k)
        .map(|p| {
            (0..k)
                .map(|s| images[p].iter().zip(&images[s]).map(|(x, y)| x * y).sum())
                .collect()
        })
        .collect();
    let (vals, _) = jacobi_eigen(&g);
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Fraction of positive–negative pairs ordered correctly, ties counted one half.
pub fn mann_whitney_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Extreme eigenvalues of `RᵀR`.
pub fn frame_bounds_oracle(r: MatRef<'_, f64>) -> (f64, f64) {
    let (vals, _) = jacobi_eigen(&gram(r));
    (vals[0], *vals.last().unwrap())
}

pub fn matched_filter_oracle(y: MatRef<'_, f64>, r: MatRef<'_, f64>) -> Vec<f64> {
    (0..y.ncols())
        .map(|j| {
            let norm = (0..y.nrows()).map(|t| y[(t, j)].powi(2)).sum::<f64>().sqrt();
            let mut best = 0.0f64;
            for i in 0..r.ncols() {
                let dot: f64 = (0..y.nrows()).map(|t| r[(t, i)] * y[(t, j)]).sum();
                best = best.max((dot / norm).abs());
            }
            best
        })
        .collect()
}
