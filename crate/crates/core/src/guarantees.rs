//! Incoherence measures and the sufficient recovery conditions for thin dictionaries.
//!
//! With `X₀ = UΣVᵀ` of rank `r` and `A₀` supported on `s` entries, the report collects
//! `μ`, `γ_UR`, `γ_V`, `ξ`, the frame bounds, the admissible interval
//! `[λ_min, λ_max]`, the sparsity ceiling `s_max` and whether both assumptions hold.

use std::collections::BTreeMap;

use faer::{Mat, MatRef, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dict::Dictionary;
use crate::error::{Error, Result};
use crate::linalg;

/// Singular values below `DEFAULT_RANK_TOL · σ_max` do not count towards the rank of `X₀`.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
/// Relative Ritz residual at which the `μ²` eigenvalue iteration stops.
pub const DEFAULT_MU_TOL: f64 = 1e-12;
/// Lanczos restarts before giving up.
pub const MAX_RESTARTS: usize = 200;
const KRYLOV_DIM: usize = 48;

const START_SEED: u64 = 0x6d75;

/// Singular subspaces of `X₀`, the support of `A₀` and the dictionary.
#[derive(Debug, Clone)]
pub struct InstanceGeometry<'a> {
    u: Mat<f64>,
    v: Mat<f64>,
    support: Vec<(usize, usize)>,
    dict: &'a Dictionary,
}

impl<'a> InstanceGeometry<'a> {
    /// `u` is `f × r`, `v` is `nm × r`, both with orthonormal columns; `support` lists
    /// `(atom, column)` positions inside `d × nm`.
    pub fn new(
        u: Mat<f64>,
        v: Mat<f64>,
        support: Vec<(usize, usize)>,
        dict: &'a Dictionary,
    ) -> Result<Self> {
        if u.nrows() != dict.bands() {
            return Err(Error::Shape(format!(
                "U has {} rows but the dictionary has {}",
                u.nrows(),
                dict.bands()
            )));
        }
        if u.ncols() != v.ncols() {
            return Err(Error::Shape(format!(
                "U has {} columns but V has {}",
                u.ncols(),
                v.ncols()
            )));
        }
        let nm = v.nrows();
        if let Some(&(i, j)) = support.iter().find(|&&(i, j)| i >= dict.len() || j >= nm) {
            return Err(Error::Shape(format!(
                "support entry ({i}, {j}) outside {} x {nm}",
                dict.len()
            )));
        }
        let mut support = support;
        support.sort_by_key(|&(i, j)| (j, i));
        support.dedup();
        Ok(Self { u, v, support, dict })
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn columns(&self) -> usize {
        self.v.nrows()
    }

    pub fn support(&self) -> &[(usize, usize)] {
        &self.support
    }

    pub fn u(&self) -> MatRef<'_, f64> {
        self.u.as_ref()
    }

    pub fn v(&self) -> MatRef<'_, f64> {
        self.v.as_ref()
    }

    pub fn dictionary(&self) -> &Dictionary {
        self.dict
    }
}

/// `P_Φ(Z) = P_U Z + Z P_V − P_U Z P_V`.
pub fn project_phi(z: MatRef<'_, f64>, u: MatRef<'_, f64>, v: MatRef<'_, f64>) -> Mat<f64> {
    if u.ncols() == 0 {
        return Mat::zeros(z.nrows(), z.ncols());
    }
    let ut_z = u.transpose() * z;
    let z_v = z * v;
    let ut_z_v = &ut_z * v;
    let mut out = u * &ut_z;
    out += &z_v * v.transpose();
    out -= u * &ut_z_v * v.transpose();
    out
}

/// Per-column block of the support with its whitening transform `K_j^{-1/2}`.
struct SupportBlock {
    column: usize,
    /// (coordinate index, atom index)
    entries: Vec<(usize, usize)>,
    inv_sqrt_gram: Mat<f64>,
}

/// `H ↦ K^{-1/2} Gᵀ P_Φ(G K^{-1/2} h)` on support coordinates, where `G h = R·P_Ω(H)`.
/// Its largest eigenvalue is `μ²`.
struct MuOperator<'g> {
    geom: &'g InstanceGeometry<'g>,
    blocks: Vec<SupportBlock>,
    rt_u: Mat<f64>,
}

impl<'g> MuOperator<'g> {
    fn new(geom: &'g InstanceGeometry<'g>) -> Result<Self> {
        let r = geom.dict.atoms();
        let mut by_col: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for (k, &(i, j)) in geom.support.iter().enumerate() {
            by_col.entry(j).or_default().push((k, i));
        }
        let mut blocks = Vec::with_capacity(by_col.len());
        for (column, entries) in by_col {
            let b = entries.len();
            let gram = Mat::from_fn(b, b, |p, q| {
                let (ip, iq) = (entries[p].1, entries[q].1);
                (0..r.nrows()).map(|t| r[(t, ip)] * r[(t, iq)]).sum::<f64>()
            });
            let evd = gram
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
            let q = evd.U();
            let lam = evd.S().column_vector();
            let lam_max = (0..b).map(|k| lam[k]).fold(0.0f64, f64::max);
            let lam_min = (0..b).map(|k| lam[k]).fold(f64::INFINITY, f64::min);
            if !(lam_min > 1e-12 * lam_max) {
                return Err(Error::Degenerate(format!(
                    "dictionary atoms supported in column {column} are linearly dependent"
                )));
            }
            let scaled = Mat::from_fn(b, b, |p, k| q[(p, k)] / lam[k].sqrt());
            blocks.push(SupportBlock {
                column,
                entries,
                inv_sqrt_gram: &scaled * q.transpose(),
            });
        }
        let rt_u = r.transpose() * geom.u.as_ref();
        Ok(Self { geom, blocks, rt_u })
    }

    fn whiten(&self, h: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; h.len()];
        for blk in &self.blocks {
            for (p, &(kp, _)) in blk.entries.iter().enumerate() {
                out[kp] = blk
                    .entries
                    .iter()
                    .enumerate()
                    .map(|(q, &(kq, _))| blk.inv_sqrt_gram[(p, q)] * h[kq])
                    .sum();
            }
        }
        out
    }

    fn apply(&self, h: &[f64]) -> Vec<f64> {
        let r = self.geom.dict.atoms();
        let u = self.geom.u.as_ref();
        let v = self.geom.v.as_ref();
        let (f, rank) = (r.nrows(), u.ncols());
        let c = self.whiten(h);

        // Columns of Z = R·P_Ω(H) on the support columns, their U-coordinates, and Z·V.
        let mut z_cols: Vec<Vec<f64>> = Vec::with_capacity(self.blocks.len());
        let mut z_v = Mat::<f64>::zeros(f, rank);
        for blk in &self.blocks {
            let mut z = vec![0.0; f];
            for &(k, atom) in &blk.entries {
                for (t, zt) in z.iter_mut().enumerate() {
                    *zt += c[k] * r[(t, atom)];
                }
            }
            for t in 0..f {
                for q in 0..rank {
                    z_v[(t, q)] += z[t] * v[(blk.column, q)];
                }
            }
            z_cols.push(z);
        }
        // (I − P_U)·Z·V, pulled back through Rᵀ
        let resid = &z_v - u * (u.transpose() * &z_v);
        let rt_resid = r.transpose() * &resid;

        let mut g = vec![0.0; h.len()];
        for (blk, z) in self.blocks.iter().zip(&z_cols) {
            let ut_z: Vec<f64> = (0..rank)
                .map(|q| (0..f).map(|t| u[(t, q)] * z[t]).sum())
                .collect();
            for &(k, atom) in &blk.entries {
                let in_col_space: f64 = (0..rank).map(|q| self.rt_u[(atom, q)] * ut_z[q]).sum();
                let in_row_space: f64 = (0..rank)
                    .map(|q| rt_resid[(atom, q)] * v[(blk.column, q)])
                    .sum();
                g[k] = in_col_space + in_row_space;
            }
        }
        self.whiten(&g)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Largest eigenvalue of the symmetric PSD operator by restarted Lanczos with full
/// reorthogonalization, started from a seeded random vector. Stops once the Ritz
/// residual `β_k|e_kᵀy|` falls below `tol·θ`.
fn top_eigenvalue(op: &MuOperator<'_>, dim: usize, tol: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut start: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    normalize(&mut start);
    let krylov = dim.min(KRYLOV_DIM);
    let mut previous = f64::NAN;
    let mut theta = 0.0;

    for _ in 0..MAX_RESTARTS {
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alpha: Vec<f64> = Vec::with_capacity(krylov);
        let mut beta: Vec<f64> = Vec::with_capacity(krylov);
        let mut exhausted = false;
        loop {
            let k = basis.len() - 1;
            let mut w = op.apply(&basis[k]);
            alpha.push(dot(&basis[k], &w));
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
            }
            let b = normalize(&mut w);
            let scale = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            if b <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
                exhausted = true;
                beta.push(0.0);
                break;
            }
            beta.push(b);
            if basis.len() == krylov {
                break;
            }
            basis.push(w);
        }

        let m = alpha.len();
        let t = Mat::from_fn(m, m, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let evd = t
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("tridiagonal eigendecomposition failed: {e:?}")))?;
        let vals = evd.S().column_vector();
        let top = (0..m).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
        theta = vals[top];
        let y = evd.U().col(top);
        let residual = beta[m - 1] * y[m - 1].abs();
        if theta <= 0.0 || exhausted || residual <= tol * theta {
            return Ok(theta.max(0.0));
        }
        previous = theta;

        start = vec![0.0; dim];
        for (i, q) in basis.iter().enumerate() {
            start.iter_mut().zip(q).for_each(|(x, v)| *x += y[i] * v);
        }
        normalize(&mut start);
    }
    Err(Error::Convergence {
        rounds: MAX_RESTARTS,
        previous: previous.max(0.0).sqrt(),
        last: theta.max(0.0).sqrt(),
    })
}

/// `μ = max_{Z ∈ Ω_R∖0} ‖P_Φ(Z)‖_F / ‖Z‖_F`, computed on the `s` support coordinates.
pub fn compute_mu(geom: &InstanceGeometry<'_>, tol: f64) -> Result<f64> {
    let s = geom.support.len();
    if s == 0 || geom.rank() == 0 {
        return Ok(0.0);
    }
    let op = MuOperator::new(geom)?;
    Ok(top_eigenvalue(&op, s, tol)?.sqrt().min(1.0))
}

/// `(γ_UR, γ_V)` with `γ_UR = maxᵢ ‖P_U R eᵢ‖² / ‖R eᵢ‖²` and `γ_V = maxᵢ ‖P_V eᵢ‖²`.
pub fn compute_gammas(geom: &InstanceGeometry<'_>) -> Result<(f64, f64)> {
    let r = geom.dict.atoms();
    let u = geom.u.as_ref();
    let rt_u = r.transpose() * u;
    let mut gamma_ur = 0.0f64;
    for i in 0..r.ncols() {
        let atom_sq = r.col(i).squared_norm_l2();
        if atom_sq == 0.0 {
            return Err(Error::Degenerate(format!("dictionary atom {i} is zero")));
        }
        gamma_ur = gamma_ur.max(rt_u.row(i).squared_norm_l2() / atom_sq);
    }
    let v = geom.v.as_ref();
    let gamma_v = (0..v.nrows())
        .map(|j| v.row(j).squared_norm_l2())
        .fold(0.0f64, f64::max);
    Ok((gamma_ur, gamma_v))
}

/// `ξ = ‖RᵀUVᵀ‖_∞`.
pub fn compute_xi(geom: &InstanceGeometry<'_>) -> f64 {
    if geom.rank() == 0 {
        return 0.0;
    }
    let rt_u = geom.dict.atoms().transpose() * geom.u.as_ref();
    linalg::max_abs((&rt_u * geom.v.transpose()).as_ref())
}

/// Everything the admissible-λ computation needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub mu: f64,
    pub gamma_ur: f64,
    pub gamma_v: f64,
    pub xi: f64,
    pub frame_lower: f64,
    pub frame_upper: f64,
    pub s: usize,
    pub r: usize,
    pub d: usize,
    pub nm: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaBounds {
    /// The intermediate constant `c`.
    pub c_small: f64,
    /// `C = c / (F_L(1 − μ)² − c)`.
    pub c_ratio: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub s_max: f64,
    pub a1: bool,
    pub a2: bool,
    pub s_ok: bool,
    /// Right-hand side of the `γ_UR` condition, when a branch applies.
    pub gamma_ur_bound: Option<f64>,
}

pub fn lambda_bounds(inp: &BoundInputs) -> Result<LambdaBounds> {
    if inp.s == 0 {
        return Err(Error::TrivialInstance(
            "the sparse component has an empty support".into(),
        ));
    }
    let s = inp.s as f64;
    let d = inp.d as f64;
    let r = inp.r as f64;
    let (fl, fu) = (inp.frame_lower, inp.frame_upper);
    let one_minus_mu_sq = (1.0 - inp.mu).powi(2);
    let m = s.min(d);

    let c_small = 0.5 * fu * ((1.0 + 2.0 * inp.gamma_ur) * (m + s * inp.gamma_v) + 2.0 * s * inp.gamma_v)
        - 0.5 * fl * (m + s * inp.gamma_v);
    let denom = fl * one_minus_mu_sq - c_small;
    let c_ratio = c_small / denom;
    // With r = 0 the tangent space is empty and no lower bound on λ is needed.
    let lambda_min = if inp.r == 0 {
        0.0
    } else if denom <= 0.0 || c_ratio >= 1.0 {
        f64::INFINITY
    } else {
        (1.0 + c_ratio) / (1.0 - c_ratio) * inp.xi
    };
    let lambda_max = (fl.sqrt() * (1.0 - inp.mu) - (r * fu).sqrt() * inp.mu) / s.sqrt();
    let s_max = if inp.r == 0 {
        f64::INFINITY
    } else {
        0.5 * one_minus_mu_sq * inp.nm as f64 / r
    };
    let a1 = lambda_min.is_finite() && lambda_max >= lambda_min;

    let s_ok = s <= s_max;
    let gamma_ur_bound = if !s_ok {
        None
    } else if s <= d {
        Some((one_minus_mu_sq - 2.0 * s * inp.gamma_v) / (2.0 * s * (1.0 + inp.gamma_v)))
    } else {
        Some((one_minus_mu_sq - 2.0 * s * inp.gamma_v) / (2.0 * (d + s * inp.gamma_v)))
    };
    let a2 = gamma_ur_bound.is_some_and(|b| inp.gamma_ur <= b);

    Ok(LambdaBounds {
        c_small,
        c_ratio,
        lambda_min,
        lambda_max,
        s_max,
        a1,
        a2,
        s_ok,
        gamma_ur_bound,
    })
}

/// JSON has no infinities; non-finite values travel as the strings `"inf"`, `"-inf"`, `"nan"`.
mod extended_float {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    struct ExtVisitor;

    impl Visitor<'_> for ExtVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(ExtVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeReport {
    pub mu: f64,
    #[serde(rename = "gamma_UR")]
    pub gamma_ur: f64,
    #[serde(rename = "gamma_V")]
    pub gamma_v: f64,
    pub xi: f64,
    #[serde(rename = "F_L")]
    pub frame_lower: f64,
    #[serde(rename = "F_U")]
    pub frame_upper: f64,
    pub s: usize,
    pub r: usize,
    pub d: usize,
    pub f: usize,
    pub nm: usize,
    #[serde(with = "extended_float")]
    pub s_max: f64,
    #[serde(rename = "C", with = "extended_float")]
    pub c_ratio: f64,
    #[serde(with = "extended_float")]
    pub lambda_min: f64,
    #[serde(with = "extended_float")]
    pub lambda_max: f64,
    pub a1_holds: bool,
    pub a2_holds: bool,
    pub s_ok: bool,
}

impl GuaranteeReport {
    /// All sufficient conditions hold: `A.1 ∧ A.2 ∧ s ≤ s_max`.
    pub fn certified(&self) -> bool {
        self.a1_holds && self.a2_holds && self.s_ok
    }

    /// Midpoint of the admissible interval.
    pub fn lambda_mid(&self) -> f64 {
        0.5 * (self.lambda_min + self.lambda_max)
    }
}

/// Build the full report from ground-truth components.
///
/// The rank of `X₀` counts singular values above `rank_tol·σ_max`; `U`, `V` and `ξ` use
/// that truncated SVD. `X₀ = 0` yields `r = 0` with every projection onto `Φ` vanishing.
pub fn diagnose(
    x0: MatRef<'_, f64>,
    a0: MatRef<'_, f64>,
    dict: &Dictionary,
    rank_tol: f64,
) -> Result<GuaranteeReport> {
    let (f, d) = (dict.bands(), dict.len());
    let nm = x0.ncols();
    if !dict.is_thin() {
        return Err(Error::ThinViolation { d, f });
    }
    linalg::shape_check("X0", (f, nm), (x0.nrows(), x0.ncols()))?;
    linalg::shape_check("A0", (d, nm), (a0.nrows(), a0.ncols()))?;

    let svd = linalg::thin_svd(x0)?;
    let sv = svd.S().column_vector();
    let sigma_max = (0..sv.nrows()).map(|k| sv[k]).fold(0.0f64, f64::max);
    let order: Vec<usize> = {
        let mut idx: Vec<usize> = (0..sv.nrows()).collect();
        idx.sort_by(|&p, &q| sv[q].total_cmp(&sv[p]));
        idx.into_iter()
            .filter(|&k| sigma_max > 0.0 && sv[k] > rank_tol * sigma_max)
            .collect()
    };
    let (su, svv) = (svd.U(), svd.V());
    let u = Mat::from_fn(f, order.len(), |i, k| su[(i, order[k])]);
    let v = Mat::from_fn(nm, order.len(), |i, k| svv[(i, order[k])]);

    let mut support = Vec::new();
    for j in 0..nm {
        for i in 0..d {
            if a0[(i, j)] != 0.0 {
                support.push((i, j));
            }
        }
    }
    let geom = InstanceGeometry::new(u, v, support, dict)?;
    let mu = compute_mu(&geom, DEFAULT_MU_TOL)?;
    let (gamma_ur, gamma_v) = compute_gammas(&geom)?;
    let xi = compute_xi(&geom);
    let (frame_lower, frame_upper) = dict.frame_bounds();
    let inputs = BoundInputs {
        mu,
        gamma_ur,
        gamma_v,
        xi,
        frame_lower,
        frame_upper,
        s: geom.support().len(),
        r: geom.rank(),
        d,
        nm,
    };
    let b = lambda_bounds(&inputs)?;
    Ok(GuaranteeReport {
        mu,
        gamma_ur,
        gamma_v,
        xi,
        frame_lower,
        frame_upper,
        s: inputs.s,
        r: inputs.r,
        d,
        f,
        nm,
        s_max: b.s_max,
        c_ratio: b.c_ratio,
        lambda_min: b.lambda_min,
        lambda_max: b.lambda_max,
        a1_holds: b.a1,
        a2_holds: b.a2,
        s_ok: b.s_ok,
    })
}
