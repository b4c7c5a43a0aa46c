//! Seeded instances of `Y = X₀ + RA₀` with known components.
//!
//! Draw order under one ChaCha8 stream: `P` (f×r), `Q` (nm×r), the dictionary, the support
//! of `A₀`, then its magnitudes. The low-rank part and the dictionary therefore do not
//! depend on `s`.

use faer::Mat;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dict::Dictionary;
use crate::error::{Error, Result};
use crate::guarantees::{self, GuaranteeReport};
use crate::linalg;
use crate::solver::DemixResult;

/// Reseeding attempts when the sampled low-rank part is rank deficient.
const MAX_ATTEMPTS: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DictionaryKind {
    /// Standard normal entries, columns scaled to unit length.
    GaussianNormalized,
    /// Orthonormal basis of a Gaussian `f × d` matrix.
    OrthonormalColumns,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub f: usize,
    pub nm: usize,
    pub r: usize,
    pub d: usize,
    pub s: usize,
    pub dictionary_kind: DictionaryKind,
    pub magnitude_low: f64,
    pub magnitude_high: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Gaussian dictionary, magnitudes in `±[0.5, 1.5]`.
    pub fn new(f: usize, nm: usize, r: usize, d: usize, s: usize, seed: u64) -> Self {
        Self {
            f,
            nm,
            r,
            d,
            s,
            dictionary_kind: DictionaryKind::GaussianNormalized,
            magnitude_low: 0.5,
            magnitude_high: 1.5,
            seed,
        }
    }

    pub fn with_kind(mut self, kind: DictionaryKind) -> Self {
        self.dictionary_kind = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.f == 0 || self.nm == 0 || self.d == 0 {
            return Err(Error::Config("f, nm and d must be positive".into()));
        }
        if self.r > self.f.min(self.nm) {
            return Err(Error::Config(format!(
                "rank {} exceeds min(f, nm) = {}",
                self.r,
                self.f.min(self.nm)
            )));
        }
        if self.d > self.f {
            return Err(Error::ThinViolation {
                d: self.d,
                f: self.f,
            });
        }
        if self.s > self.d * self.nm {
            return Err(Error::Config(format!(
                "sparsity {} exceeds d·nm = {}",
                self.s,
                self.d * self.nm
            )));
        }
        if !(self.magnitude_low > 0.0 && self.magnitude_high >= self.magnitude_low && self.magnitude_high.is_finite()) {
            return Err(Error::Config(format!(
                "magnitudes need 0 < low <= high, got [{}, {}]",
                self.magnitude_low, self.magnitude_high
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthInstance {
    pub spec: SynthSpec,
    /// Seed that produced the instance; differs from `spec.seed` after a rank-deficient draw.
    pub seed_used: u64,
    pub y: Mat<f64>,
    pub x0: Mat<f64>,
    pub a0: Mat<f64>,
    pub dictionary: Dictionary,
    /// `None` when `s = 0`.
    pub report: Option<GuaranteeReport>,
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn numerical_rank(m: &Mat<f64>) -> Result<usize> {
    let sv = linalg::singular_values(m.as_ref())?;
    let top = sv.first().copied().unwrap_or(0.0);
    Ok(sv.iter().filter(|&&v| top > 0.0 && v > guarantees::DEFAULT_RANK_TOL * top).count())
}

fn draw(spec: &SynthSpec, seed: u64) -> Result<Option<(Mat<f64>, Mat<f64>, Dictionary)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = gaussian(spec.f, spec.r, &mut rng);
    let q = gaussian(spec.nm, spec.r, &mut rng);
    let x0 = &p * q.transpose();
    let raw = gaussian(spec.f, spec.d, &mut rng);
    let raw = match spec.dictionary_kind {
        DictionaryKind::GaussianNormalized => raw,
        DictionaryKind::OrthonormalColumns => linalg::orthonormal_columns(raw.as_ref()),
    };
    let dict = Dictionary::from_raw(raw.as_ref())?;
    if numerical_rank(&x0)? != spec.r || dict.pinv().is_none() {
        return Ok(None);
    }

    let mut a0 = Mat::<f64>::zeros(spec.d, spec.nm);
    let positions = index::sample(&mut rng, spec.d * spec.nm, spec.s);
    for pos in positions.iter() {
        let magnitude = rng.random_range(spec.magnitude_low..=spec.magnitude_high);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        a0[(pos % spec.d, pos / spec.d)] = sign * magnitude;
    }
    Ok(Some((x0, a0, dict)))
}

/// Deterministic under `spec.seed`.
pub fn generate(spec: &SynthSpec) -> Result<SynthInstance> {
    spec.validate()?;
    for attempt in 0..MAX_ATTEMPTS {
        let seed = spec.seed.wrapping_add(attempt);
        let Some((x0, a0, dictionary)) = draw(spec, seed)? else {
            log::warn!("seed {seed} gave a rank-deficient draw; retrying with {}", seed.wrapping_add(1));
            continue;
        };
        let y = &x0 + dictionary.atoms() * &a0;
        let report = if spec.s == 0 {
            None
        } else {
            Some(guarantees::diagnose(
                x0.as_ref(),
                a0.as_ref(),
                &dictionary,
                guarantees::DEFAULT_RANK_TOL,
            )?)
        };
        return Ok(SynthInstance {
            spec: *spec,
            seed_used: seed,
            y,
            x0,
            a0,
            dictionary,
            report,
        });
    }
    Err(Error::Degenerate(format!(
        "{MAX_ATTEMPTS} consecutive seeds from {} gave rank-deficient draws",
        spec.seed
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryError {
    pub rel_x: f64,
    pub rel_a: f64,
    pub support_f1: f64,
}

/// Entries of `Â` above this fraction of `‖Â‖_∞` count as support.
pub const SUPPORT_THRESHOLD: f64 = 1e-6;

/// `‖X̂ − X₀‖_F / max(‖X₀‖_F, 1)`, the same for `A`, and the F1 score of the support of `Â`
/// against that of `A₀`.
pub fn recovery_error(est: &DemixResult, x0: &Mat<f64>, a0: &Mat<f64>) -> Result<RecoveryError> {
    linalg::shape_check("X_hat", (x0.nrows(), x0.ncols()), (est.x_hat.nrows(), est.x_hat.ncols()))?;
    linalg::shape_check("A_hat", (a0.nrows(), a0.ncols()), (est.a_hat.nrows(), est.a_hat.ncols()))?;
    let rel_x = (&est.x_hat - x0).norm_l2() / x0.norm_l2().max(1.0);
    let rel_a = (&est.a_hat - a0).norm_l2() / a0.norm_l2().max(1.0);

    let cut = SUPPORT_THRESHOLD * linalg::max_abs(est.a_hat.as_ref());
    let (mut tp, mut est_count, mut true_count) = (0usize, 0usize, 0usize);
    for j in 0..a0.ncols() {
        for i in 0..a0.nrows() {
            let predicted = est.a_hat[(i, j)].abs() > cut;
            let actual = a0[(i, j)] != 0.0;
            est_count += predicted as usize;
            true_count += actual as usize;
            tp += (predicted && actual) as usize;
        }
    }
    let support_f1 = if est_count + true_count == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (est_count + true_count) as f64
    };
    Ok(RecoveryError {
        rel_x,
        rel_a,
        support_f1,
    })
}
