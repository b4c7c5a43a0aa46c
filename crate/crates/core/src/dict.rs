//! Known-dictionary construction: voxel sampling, a minimal alternating ℓ1 learner,
//! frame bounds and the pseudo-inverse.

use faer::{Mat, MatRef};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::hsio::{DataMatrix, GroundTruthMask};
use crate::linalg;
use crate::solver::prox::soft_threshold;

/// `σ_min < RANK_TOL · σ_max` declares a dictionary rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Default number of outer rounds for [`learn_dictionary`].
pub const DEFAULT_LEARN_ITERS: usize = 50;

const SPARSE_CODING_STEPS: usize = 50;

/// An `f × d` dictionary with unit-norm atoms.
#[derive(Debug, Clone)]
pub struct Dictionary {
    atoms: Mat<f64>,
    frame_lower: f64,
    frame_upper: f64,
    sigma_min: f64,
    sigma_max: f64,
    pinv: Option<Mat<f64>>,
}

impl Dictionary {
    /// Normalize the columns of `raw` to unit Euclidean norm and cache frame bounds and,
    /// when `raw` has full column rank, the pseudo-inverse.
    pub fn from_raw(raw: MatRef<'_, f64>) -> Result<Self> {
        if raw.nrows() == 0 || raw.ncols() == 0 {
            return Err(Error::Degenerate("empty dictionary".into()));
        }
        linalg::check_finite(raw, "dictionary")?;
        let norms = linalg::column_norms(raw);
        if let Some(j) = norms.iter().position(|&n| n == 0.0) {
            return Err(Error::Degenerate(format!("dictionary atom {j} is zero")));
        }
        let atoms = Mat::from_fn(raw.nrows(), raw.ncols(), |i, j| raw[(i, j)] / norms[j]);
        Self::from_normalized(atoms)
    }

    fn from_normalized(atoms: Mat<f64>) -> Result<Self> {
        let sv = linalg::singular_values(atoms.as_ref())?;
        let sigma_max = sv[0];
        let sigma_min = if atoms.ncols() > atoms.nrows() {
            0.0
        } else {
            *sv.last().unwrap()
        };
        let pinv = if sigma_min >= RANK_TOL * sigma_max {
            Some(pseudo_inverse(atoms.as_ref())?)
        } else {
            None
        };
        Ok(Self {
            frame_lower: sigma_min * sigma_min,
            frame_upper: sigma_max * sigma_max,
            sigma_min,
            sigma_max,
            pinv,
            atoms,
        })
    }

    /// `d × d` identity, the dictionary of plain robust PCA.
    pub fn identity(d: usize) -> Self {
        Self {
            atoms: Mat::identity(d, d),
            frame_lower: 1.0,
            frame_upper: 1.0,
            sigma_min: 1.0,
            sigma_max: 1.0,
            pinv: Some(Mat::identity(d, d)),
        }
    }

    pub fn atoms(&self) -> MatRef<'_, f64> {
        self.atoms.as_ref()
    }

    /// Number of rows `f`.
    pub fn bands(&self) -> usize {
        self.atoms.nrows()
    }

    /// Number of atoms `d`.
    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }

    pub fn is_thin(&self) -> bool {
        self.len() <= self.bands()
    }

    /// `(F_L, F_U)`.
    pub fn frame_bounds(&self) -> (f64, f64) {
        (self.frame_lower, self.frame_upper)
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn pinv(&self) -> Option<MatRef<'_, f64>> {
        self.pinv.as_ref().map(|p| p.as_ref())
    }

    /// The pseudo-inverse, or the rank error explaining why there is none.
    pub fn require_pinv(&self) -> Result<MatRef<'_, f64>> {
        self.pinv().ok_or(Error::Rank {
            sigma_min: self.sigma_min,
            sigma_max: self.sigma_max,
        })
    }
}

/// Squared extreme singular values `(σ_min(R)², σ_max(R)²)`; `F_L = 0` for fat `R`.
pub fn frame_bounds(r: MatRef<'_, f64>) -> Result<(f64, f64)> {
    if r.nrows() == 0 || r.ncols() == 0 {
        return Err(Error::Degenerate("empty dictionary".into()));
    }
    let sv = linalg::singular_values(r)?;
    let lo = if r.ncols() > r.nrows() {
        0.0
    } else {
        *sv.last().unwrap()
    };
    Ok((lo * lo, sv[0] * sv[0]))
}

/// `R† = (RᵀR)⁻¹Rᵀ`, evaluated through the SVD as `V Σ⁻¹ Uᵀ`.
pub fn pseudo_inverse(r: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let (f, d) = (r.nrows(), r.ncols());
    if f == 0 || d == 0 {
        return Err(Error::Degenerate("empty matrix".into()));
    }
    let svd = linalg::thin_svd(r)?;
    let s = svd.S().column_vector();
    let k = s.nrows();
    let sigma_max = (0..k).map(|i| s[i]).fold(0.0f64, f64::max);
    let sigma_min = if d > f {
        0.0
    } else {
        (0..k).map(|i| s[i]).fold(f64::INFINITY, f64::min)
    };
    if sigma_max == 0.0 || sigma_min < RANK_TOL * sigma_max {
        return Err(Error::Rank {
            sigma_min,
            sigma_max,
        });
    }
    let u = svd.U();
    let v = svd.V();
    let v_scaled = Mat::from_fn(d, k, |i, j| v[(i, j)] / s[j]);
    Ok(&v_scaled * u.transpose())
}

/// Dictionary of `d` distinct positive-class voxels chosen uniformly without replacement.
///
/// Returns the dictionary and the chosen voxel (column) indices, in selection order.
pub fn sample_dictionary(
    y: &DataMatrix,
    mask: &GroundTruthMask,
    d: usize,
    seed: u64,
) -> Result<(Dictionary, Vec<usize>)> {
    if mask.len() != y.cols() {
        return Err(Error::Shape(format!(
            "mask has {} labels but data has {} columns",
            mask.len(),
            y.cols()
        )));
    }
    let positives = mask.positive_indices();
    if d > positives.len() {
        return Err(Error::InsufficientSamples {
            requested: d,
            available: positives.len(),
        });
    }
    if d == 0 {
        return Err(Error::Config("dictionary size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<usize> = index::sample(&mut rng, positives.len(), d)
        .into_iter()
        .map(|k| positives[k])
        .collect();
    let yr = y.as_ref();
    let raw = Mat::from_fn(y.rows(), d, |i, j| yr[(i, chosen[j])]);
    Ok((Dictionary::from_raw(raw.as_ref())?, chosen))
}

#[derive(Debug, Clone)]
pub struct LearnedDictionary {
    pub dictionary: Dictionary,
    /// `½‖Y − RA‖_F² + ρ‖A‖_1`, first at initialization and then after every outer round.
    pub objective: Vec<f64>,
    /// Number of atoms that had to be re-seeded from the residual.
    pub reseeded: usize,
}

fn random_unit(rng: &mut ChaCha8Rng, f: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..f).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn learning_objective(y: MatRef<'_, f64>, r: &Mat<f64>, a: &Mat<f64>, rho: f64) -> f64 {
    let resid = y - r * a;
    0.5 * resid.squared_norm_l2() + rho * linalg::l1_norm(a.as_ref())
}

/// Alternating minimization of `½‖Y − RA‖_F² + ρ‖A‖_1` over unit-norm atoms `R` and codes `A`.
///
/// Each outer round runs iterative soft-thresholding on `A`, then updates every atom in
/// turn by least squares restricted to the unit sphere (the least-squares direction,
/// renormalized), which keeps the objective non-increasing. An atom whose code row is
/// identically zero is re-seeded from a random residual column.
pub fn learn_dictionary(
    y_pos: MatRef<'_, f64>,
    d: usize,
    rho: f64,
    iters: usize,
    seed: u64,
) -> Result<LearnedDictionary> {
    let (f, n) = (y_pos.nrows(), y_pos.ncols());
    if d > f {
        return Err(Error::ThinViolation { d, f });
    }
    if d == 0 {
        return Err(Error::Config("dictionary size must be at least 1".into()));
    }
    if !(rho > 0.0) {
        return Err(Error::Config(format!("rho must be positive, got {rho}")));
    }
    if n == 0 {
        return Err(Error::Degenerate("no training voxels".into()));
    }
    linalg::check_finite(y_pos, "training voxels")?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = Mat::<f64>::zeros(f, d);
    let picks = index::sample(&mut rng, n, d.min(n)).into_vec();
    for j in 0..d {
        let col: Vec<f64> = match picks.get(j) {
            Some(&c) => {
                let norm = y_pos.col(c).norm_l2();
                if norm > 0.0 {
                    (0..f).map(|i| y_pos[(i, c)] / norm).collect()
                } else {
                    random_unit(&mut rng, f)
                }
            }
            None => random_unit(&mut rng, f),
        };
        for i in 0..f {
            r[(i, j)] = col[i];
        }
    }

    let mut a = Mat::<f64>::zeros(d, n);
    let mut objective = vec![learning_objective(y_pos, &r, &a, rho)];
    let mut reseeded = 0;

    for _ in 0..iters {
        // sparse coding
        let lip = linalg::spectral_norm(r.as_ref())?.powi(2);
        for _ in 0..SPARSE_CODING_STEPS {
            let resid = y_pos - &r * &a;
            let step = &a + faer::Scale(1.0 / lip) * (r.transpose() * &resid);
            a = soft_threshold(step.as_ref(), rho / lip);
        }

        // atom-by-atom update on the unit sphere
        let gram = &a * a.transpose();
        let cross = y_pos * a.transpose();
        for j in 0..d {
            if gram[(j, j)] == 0.0 {
                let resid = y_pos - &r * &a;
                let c = rng.random_range(0..n);
                let norm = resid.col(c).norm_l2();
                let col: Vec<f64> = if norm > 0.0 {
                    (0..f).map(|i| resid[(i, c)] / norm).collect()
                } else {
                    random_unit(&mut rng, f)
                };
                log::warn!("dictionary atom {j} unused; re-seeded from residual column {c}");
                for i in 0..f {
                    r[(i, j)] = col[i];
                }
                reseeded += 1;
                continue;
            }
            let mut b: Vec<f64> = (0..f).map(|i| cross[(i, j)]).collect();
            for k in (0..d).filter(|&k| k != j) {
                let g = gram[(k, j)];
                if g != 0.0 {
                    for (i, bi) in b.iter_mut().enumerate() {
                        *bi -= r[(i, k)] * g;
                    }
                }
            }
            let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for i in 0..f {
                    r[(i, j)] = b[i] / norm;
                }
            }
        }
        objective.push(learning_objective(y_pos, &r, &a, rho));
    }

    Ok(LearnedDictionary {
        dictionary: Dictionary::from_raw(r.as_ref())?,
        objective,
        reseeded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn atoms_are_unit_norm() {
        let d = Dictionary::from_raw(gaussian(12, 5, 3).as_ref()).unwrap();
        for n in linalg::column_norms(d.atoms()) {
            assert!((n - 1.0).abs() <= 1e-12);
        }
        let (lo, hi) = d.frame_bounds();
        assert!(0.0 < lo && lo <= hi);
    }

    #[test]
    fn zero_atom_is_rejected() {
        let mut raw = gaussian(4, 2, 1);
        for i in 0..4 {
            raw[(i, 1)] = 0.0;
        }
        assert!(matches!(Dictionary::from_raw(raw.as_ref()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn frame_bounds_of_orthonormal_columns() {
        let eye = Mat::<f64>::identity(4, 4);
        let (lo, hi) = frame_bounds(eye.as_ref()).unwrap();
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 1.0).abs() < 1e-14);
        let q = linalg::orthonormal_columns(gaussian(9, 3, 7).as_ref());
        let (lo, hi) = frame_bounds(q.as_ref()).unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pseudo_inverse_small_cases() {
        let eye = Mat::<f64>::identity(3, 3);
        let p = pseudo_inverse(eye.as_ref()).unwrap();
        assert!(linalg::max_abs((&p - &eye).as_ref()) < 1e-15);

        let r = Mat::from_fn(2, 1, |i, _| [2.0, 0.0][i]);
        let p = pseudo_inverse(r.as_ref()).unwrap();
        assert_eq!((p.nrows(), p.ncols()), (1, 2));
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15 && p[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn rank_deficient_pinv_reports_sigma_min() {
        let mut r = gaussian(5, 3, 2);
        for i in 0..5 {
            r[(i, 2)] = r[(i, 0)] + r[(i, 1)];
        }
        match pseudo_inverse(r.as_ref()) {
            Err(Error::Rank { sigma_min, sigma_max }) => assert!(sigma_min < 1e-10 * sigma_max),
            other => panic!("expected rank error, got {other:?}"),
        }
        let dict = Dictionary::from_raw(r.as_ref()).unwrap();
        assert!(dict.pinv().is_none());
        assert!(matches!(dict.require_pinv(), Err(Error::Rank { .. })));
    }

    fn mask_and_data(n_pos: usize) -> (DataMatrix, GroundTruthMask) {
        let y = DataMatrix::new(gaussian(6, 20, 11)).unwrap();
        let labels = (0..20).map(|j| j % 2 == 0 && j / 2 < n_pos).collect();
        (y, GroundTruthMask::from_labels(labels))
    }

    #[test]
    fn sampling_is_deterministic_and_uses_positives() {
        let (y, mask) = mask_and_data(8);
        let (d1, idx1) = sample_dictionary(&y, &mask, 4, 99).unwrap();
        let (_, idx2) = sample_dictionary(&y, &mask, 4, 99).unwrap();
        assert_eq!(idx1, idx2);
        assert_eq!(d1.len(), 4);
        let mut sorted = idx1.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 4);
        assert!(idx1.iter().all(|&j| mask.labels()[j]));
    }

    #[test]
    fn sampling_all_positives_and_too_many() {
        let (y, mask) = mask_and_data(5);
        let (_, idx) = sample_dictionary(&y, &mask, 5, 1).unwrap();
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, mask.positive_indices());
        assert!(matches!(
            sample_dictionary(&y, &mask, 6, 1),
            Err(Error::InsufficientSamples { requested: 6, available: 5 })
        ));
    }

    #[test]
    fn learning_rejects_fat_dictionaries() {
        let y = gaussian(3, 10, 1);
        assert!(matches!(
            learn_dictionary(y.as_ref(), 4, 0.1, 5, 0),
            Err(Error::ThinViolation { d: 4, f: 3 })
        ));
    }

    #[test]
    fn learning_rank_one_recovers_the_column() {
        let col = [1.0, -2.0, 0.5, 3.0];
        let y = Mat::from_fn(4, 6, |i, _| col[i]);
        let learned = learn_dictionary(y.as_ref(), 1, 0.1, 10, 5).unwrap();
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        let atom = learned.dictionary.atoms();
        let sign = atom[(0, 0)].signum();
        for i in 0..4 {
            assert!((sign * atom[(i, 0)] - col[i] / norm).abs() < 1e-12);
        }
    }

    #[test]
    fn learning_objective_is_monotone() {
        let y = gaussian(10, 40, 21);
        for (d, rho) in [(4, 0.01), (10, 0.5)] {
            let learned = learn_dictionary(y.as_ref(), d, rho, 20, 3).unwrap();
            assert_eq!(learned.objective.len(), 21);
            for w in learned.objective.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "objective rose: {} -> {}", w[0], w[1]);
            }
        }
    }
}
