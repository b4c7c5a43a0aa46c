//! Detection scores, matched-filter baselines and ROC evaluation.
//!
//! A voxel is declared a target when its score exceeds the threshold (strictly).

use faer::MatRef;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dict::Dictionary;
use crate::error::{Error, Result};
use crate::hsio::GroundTruthMask;
use crate::linalg;
use crate::solver::{self, ApgConfig, DemixResult};

/// Threshold count of the fixed sweep used for the matched filters.
pub const FIXED_GRID_STEPS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "XpRA")]
    Xpra,
    #[serde(rename = "RPCA†")]
    RpcaDagger,
    #[serde(rename = "MF")]
    Mf,
    #[serde(rename = "MF†")]
    MfDagger,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Xpra, Method::RpcaDagger, Method::Mf, Method::MfDagger];

    pub fn label(self) -> &'static str {
        match self {
            Method::Xpra => "XpRA",
            Method::RpcaDagger => "RPCA†",
            Method::Mf => "MF",
            Method::MfDagger => "MF†",
        }
    }

    /// Sweep used when evaluating this method's scores.
    pub fn default_sweep(self) -> Sweep {
        match self {
            Method::Xpra | Method::RpcaDagger => Sweep::ScoreValues,
            Method::Mf | Method::MfDagger => Sweep::FixedGrid {
                steps: FIXED_GRID_STEPS,
            },
        }
    }

    /// Whether the method solves the demixing program (and so needs a λ).
    pub fn uses_solver(self) -> bool {
        matches!(self, Method::Xpra | Method::RpcaDagger)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
    pub method: Method,
    pub flipped: bool,
}

impl ScoreVector {
    pub fn new(scores: Vec<f64>, method: Method) -> Result<Self> {
        if let Some(j) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("score[{j}] = {}", scores[j])));
        }
        Ok(Self {
            scores,
            method,
            flipped: false,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }
}

/// `score_j = ‖Â e_j‖₂`.
pub fn column_norm_scores(a_hat: MatRef<'_, f64>) -> Result<ScoreVector> {
    linalg::check_finite(a_hat, "A_hat")?;
    ScoreVector::new(linalg::column_norms(a_hat), Method::Xpra)
}

/// Largest absolute entry per column after normalizing every column to unit length.
/// Zero columns score 0.
fn max_abs_normalized(m: MatRef<'_, f64>, what: &str) -> Vec<f64> {
    let norms = linalg::column_norms(m);
    let zero = norms.iter().filter(|&&n| n == 0.0).count();
    if zero > 0 {
        log::warn!("{zero} zero columns in {what} scored 0");
    }
    (0..m.ncols())
        .map(|j| {
            if norms[j] == 0.0 {
                0.0
            } else {
                (0..m.nrows()).map(|i| m[(i, j)].abs()).fold(0.0, f64::max) / norms[j]
            }
        })
        .collect()
}

/// `score_j = maxᵢ |⟨rᵢ, yⱼ/‖yⱼ‖⟩|`.
pub fn matched_filter(y: MatRef<'_, f64>, dict: &Dictionary) -> Result<ScoreVector> {
    linalg::shape_check("Y", (dict.bands(), y.ncols()), (y.nrows(), y.ncols()))?;
    linalg::check_finite(y, "Y")?;
    let norms = linalg::column_norms(y);
    let zero = norms.iter().filter(|&&n| n == 0.0).count();
    if zero > 0 {
        log::warn!("{zero} zero columns in Y scored 0");
    }
    let corr = dict.atoms().transpose() * y;
    let scores = (0..y.ncols())
        .map(|j| {
            if norms[j] == 0.0 {
                0.0
            } else {
                (0..corr.nrows()).map(|i| corr[(i, j)].abs()).fold(0.0, f64::max) / norms[j]
            }
        })
        .collect();
    ScoreVector::new(scores, Method::Mf)
}

/// Largest absolute entry of each column-normalized column of `R†Y`.
pub fn matched_filter_dagger(y: MatRef<'_, f64>, dict: &Dictionary) -> Result<ScoreVector> {
    linalg::shape_check("Y", (dict.bands(), y.ncols()), (y.nrows(), y.ncols()))?;
    linalg::check_finite(y, "Y")?;
    let y_tilde = solver::transformed_data(y, dict)?;
    ScoreVector::new(max_abs_normalized(y_tilde.as_ref(), "R†Y"), Method::MfDagger)
}

/// How thresholds are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sweep {
    /// Every distinct score value; the resulting curve is exact.
    ScoreValues,
    /// `t = k/steps` for `k = 1..=steps`.
    FixedGrid { steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// `None` for the (0,0) and (1,1) endpoints.
    pub threshold: Option<f64>,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Sorted by FPR, from (0,0) to (1,1).
    pub points: Vec<RocPoint>,
    pub auc: f64,
    /// Point maximizing `TPR − FPR`; the first (highest threshold) wins ties.
    pub best_point: RocPoint,
    pub flipped: bool,
    /// Scores were mapped to `pivot − s` before thresholding.
    pub flip_pivot: Option<f64>,
}

impl RocCurve {
    /// Detection decisions at the best operating point.
    pub fn decisions(&self, scores: &[f64]) -> Vec<bool> {
        let t = match self.best_point.threshold {
            Some(t) => t,
            None => return vec![self.best_point.tpr > 0.0; scores.len()],
        };
        scores
            .iter()
            .map(|&s| self.flip_pivot.map_or(s, |p| p - s) > t)
            .collect()
    }
}

fn trace_curve(scores: &[f64], labels: &[bool], thresholds_desc: &[f64]) -> Vec<RocPoint> {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&p, &q| scores[q].total_cmp(&scores[p]));

    let mut points = Vec::with_capacity(thresholds_desc.len() + 2);
    points.push(RocPoint {
        threshold: None,
        fpr: 0.0,
        tpr: 0.0,
    });
    let (mut tp, mut fp, mut next) = (0usize, 0usize, 0usize);
    for &t in thresholds_desc {
        while next < order.len() && scores[order[next]] > t {
            if labels[order[next]] {
                tp += 1;
            } else {
                fp += 1;
            }
            next += 1;
        }
        points.push(RocPoint {
            threshold: Some(t),
            fpr: fp as f64 / neg,
            tpr: tp as f64 / pos,
        });
    }
    points.push(RocPoint {
        threshold: None,
        fpr: 1.0,
        tpr: 1.0,
    });
    points
}

fn trapezoid(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5)
        .sum()
}

fn curve_for(scores: &[f64], labels: &[bool], sweep: Sweep) -> Result<(Vec<RocPoint>, f64)> {
    let thresholds: Vec<f64> = match sweep {
        Sweep::ScoreValues => {
            let mut v = scores.to_vec();
            v.sort_by(|a, b| b.total_cmp(a));
            v.dedup();
            v
        }
        Sweep::FixedGrid { steps } => {
            if steps == 0 {
                return Err(Error::Config("fixed threshold grid needs at least one step".into()));
            }
            (1..=steps).rev().map(|k| k as f64 / steps as f64).collect()
        }
    };
    let points = trace_curve(scores, labels, &thresholds);
    let auc = trapezoid(&points);
    Ok((points, auc))
}

/// ROC curve of `scores` against `mask`.
///
/// With `allow_flip`, an AUC below one half is answered by reversing the score order
/// through `s ↦ (min + max) − s`, which keeps the scores inside their original range.
pub fn roc(
    scores: &ScoreVector,
    mask: &GroundTruthMask,
    sweep: Sweep,
    allow_flip: bool,
) -> Result<RocCurve> {
    if scores.len() != mask.len() {
        return Err(Error::Size {
            expected: mask.len(),
            found: scores.len(),
        });
    }
    let (positives, negatives) = (mask.positives(), mask.negatives());
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateMask {
            positives,
            negatives,
        });
    }
    let labels = mask.labels();
    let (mut points, mut auc) = curve_for(&scores.scores, labels, sweep)?;
    let mut flip_pivot = None;
    if allow_flip && auc < 0.5 {
        let lo = scores.scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scores.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pivot = lo + hi;
        let mirrored: Vec<f64> = scores.scores.iter().map(|&s| pivot - s).collect();
        (points, auc) = curve_for(&mirrored, labels, sweep)?;
        flip_pivot = Some(pivot);
    }
    let best_point = points
        .iter()
        .copied()
        .fold(None::<RocPoint>, |best, p| match best {
            Some(b) if b.tpr - b.fpr >= p.tpr - p.fpr => Some(b),
            _ => Some(p),
        })
        .expect("curve has endpoints");
    Ok(RocCurve {
        points,
        auc,
        best_point,
        flipped: flip_pivot.is_some(),
        flip_pivot,
    })
}

/// Which demixer a λ sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Demixer {
    Xpra,
    RpcaDagger,
}

impl Demixer {
    pub fn method(self) -> Method {
        match self {
            Demixer::Xpra => Method::Xpra,
            Demixer::RpcaDagger => Method::RpcaDagger,
        }
    }

    pub fn run(self, y: MatRef<'_, f64>, dict: &Dictionary, cfg: &ApgConfig) -> Result<DemixResult> {
        match self {
            Demixer::Xpra => solver::demix(y, dict, cfg),
            Demixer::RpcaDagger => solver::rpca_dagger(y, dict, cfg),
        }
    }

    /// The λ grid of the problem the demixer solves: `Y` with `R` for XpRA, `R†Y` with
    /// the identity for RPCA†.
    pub fn lambda_grid(self, y: MatRef<'_, f64>, dict: &Dictionary, count: usize) -> Result<Vec<f64>> {
        match self {
            Demixer::Xpra => solver::lambda_grid(y, dict, count),
            Demixer::RpcaDagger => {
                let y_tilde = solver::transformed_data(y, dict)?;
                solver::lambda_grid(y_tilde.as_ref(), &Dictionary::identity(dict.len()), count)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaOutcome {
    pub index: usize,
    pub lambda: f64,
    pub auc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LambdaSweep {
    pub lambda: f64,
    pub index: usize,
    pub roc: RocCurve,
    pub scores: ScoreVector,
    pub result: DemixResult,
    /// One entry per grid value, in grid order.
    pub outcomes: Vec<LambdaOutcome>,
}

struct Candidate {
    index: usize,
    roc: RocCurve,
    scores: ScoreVector,
    result: DemixResult,
}

fn better(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(a), Some(b)) => {
            let a_wins = a.roc.auc > b.roc.auc || (a.roc.auc == b.roc.auc && a.index < b.index);
            Some(if a_wins { a } else { b })
        }
        (a, None) => a,
        (None, b) => b,
    }
}

/// Demix at every λ of `grid` (in parallel on the current rayon pool), score by column
/// norms of `Â` and keep the λ with the largest AUC; ties go to the smaller grid index.
/// Per-λ failures are recorded; the sweep fails only when every λ fails.
pub fn best_auc_over_lambda(
    y: MatRef<'_, f64>,
    dict: &Dictionary,
    mask: &GroundTruthMask,
    grid: &[f64],
    cfg: &ApgConfig,
    demixer: Demixer,
    allow_flip: bool,
) -> Result<LambdaSweep> {
    if grid.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    if mask.len() != y.ncols() {
        return Err(Error::Size {
            expected: y.ncols(),
            found: mask.len(),
        });
    }
    if mask.positives() == 0 || mask.negatives() == 0 {
        return Err(Error::DegenerateMask {
            positives: mask.positives(),
            negatives: mask.negatives(),
        });
    }
    let evaluate = |index: usize, lambda: f64| -> Result<Candidate> {
        let cfg = ApgConfig { lambda, ..*cfg };
        let result = demixer.run(y, dict, &cfg)?;
        let scores = column_norm_scores(result.a_hat.as_ref())?.with_method(demixer.method());
        let roc = roc(&scores, mask, Sweep::ScoreValues, allow_flip)?;
        Ok(Candidate {
            index,
            roc,
            scores,
            result,
        })
    };
    let (mut outcomes, best) = grid
        .par_iter()
        .enumerate()
        .map(|(index, &lambda)| match evaluate(index, lambda) {
            Ok(c) => (
                vec![LambdaOutcome {
                    index,
                    lambda,
                    auc: Some(c.roc.auc),
                    error: None,
                }],
                Some(c),
            ),
            Err(e) => {
                log::warn!("lambda {lambda:e} failed: {e}");
                (
                    vec![LambdaOutcome {
                        index,
                        lambda,
                        auc: None,
                        error: Some(format!("{}: {e}", e.category())),
                    }],
                    None,
                )
            }
        })
        .reduce(
            || (Vec::new(), None),
            |(mut oa, ca), (ob, cb)| {
                oa.extend(ob);
                (oa, better(ca, cb))
            },
        );
    outcomes.sort_by_key(|o| o.index);
    match best {
        Some(c) => Ok(LambdaSweep {
            lambda: grid[c.index],
            index: c.index,
            roc: c.roc,
            scores: c.scores,
            result: c.result,
            outcomes,
        }),
        None => Err(Error::AllLambdasFailed {
            count: grid.len(),
            first: outcomes[0].error.clone().unwrap_or_default(),
        }),
    }
}

/// Scores of a non-solver method.
pub fn filter_scores(method: Method, y: MatRef<'_, f64>, dict: &Dictionary) -> Result<ScoreVector> {
    match method {
        Method::Mf => matched_filter(y, dict),
        Method::MfDagger => matched_filter_dagger(y, dict),
        other => Err(Error::Config(format!("{other} needs a lambda sweep, not a filter"))),
    }
}

/// One row of a method comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEvaluation {
    pub method: Method,
    /// Selected λ for the solver-based methods.
    pub lambda: Option<f64>,
    pub roc: RocCurve,
}

/// Score `y` with every method in `methods`; solver methods sweep `lambda_count` values of
/// their own λ grid. Matched filters always use the fixed threshold grid.
pub fn evaluate_methods(
    y: MatRef<'_, f64>,
    dict: &Dictionary,
    mask: &GroundTruthMask,
    methods: &[Method],
    lambda_count: usize,
    cfg: &ApgConfig,
    allow_flip: bool,
) -> Result<Vec<MethodEvaluation>> {
    methods
        .iter()
        .map(|&method| {
            let demixer = match method {
                Method::Xpra => Some(Demixer::Xpra),
                Method::RpcaDagger => Some(Demixer::RpcaDagger),
                Method::Mf | Method::MfDagger => None,
            };
            match demixer {
                Some(dm) => {
                    let grid = dm.lambda_grid(y, dict, lambda_count)?;
                    let sweep = best_auc_over_lambda(y, dict, mask, &grid, cfg, dm, allow_flip)?;
                    Ok(MethodEvaluation {
                        method,
                        lambda: Some(sweep.lambda),
                        roc: sweep.roc,
                    })
                }
                None => {
                    let scores = filter_scores(method, y, dict)?;
                    Ok(MethodEvaluation {
                        method,
                        lambda: None,
                        roc: roc(&scores, mask, method.default_sweep(), allow_flip)?,
                    })
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::Mat;

    fn mask(labels: &[bool]) -> GroundTruthMask {
        GroundTruthMask::from_labels(labels.to_vec())
    }

    fn sv(scores: &[f64]) -> ScoreVector {
        ScoreVector::new(scores.to_vec(), Method::Xpra).unwrap()
    }

    #[test]
    fn column_norms_of_three_four() {
        let a = Mat::from_fn(2, 2, |i, j| if j == 0 { [3.0, 4.0][i] } else { 0.0 });
        assert_eq!(column_norm_scores(a.as_ref()).unwrap().scores, vec![5.0, 0.0]);
    }

    #[test]
    fn perfect_separation() {
        let c = roc(&sv(&[0.9, 0.8, 0.2, 0.1]), &mask(&[true, true, false, false]), Sweep::ScoreValues, false).unwrap();
        assert_eq!(c.auc, 1.0);
        assert_eq!((c.best_point.tpr, c.best_point.fpr), (1.0, 0.0));
        assert_eq!(c.best_point.threshold, Some(0.2));
    }

    #[test]
    fn constant_scores_sit_on_the_diagonal() {
        let c = roc(&sv(&[0.4; 5]), &mask(&[true, false, true, false, false]), Sweep::ScoreValues, false).unwrap();
        assert_eq!(c.auc, 0.5);
        assert_eq!(c.points.len(), 3);
    }

    #[test]
    fn single_class_mask_is_rejected() {
        let err = roc(&sv(&[0.1, 0.2]), &mask(&[true, true]), Sweep::ScoreValues, false).unwrap_err();
        assert!(matches!(err, Error::DegenerateMask { positives: 2, negatives: 0 }));
    }

    #[test]
    fn flip_reverses_the_ordering() {
        let labels = mask(&[true, true, false, false]);
        let s = sv(&[0.1, 0.2, 0.8, 0.9]);
        let plain = roc(&s, &labels, Sweep::ScoreValues, false).unwrap();
        assert_eq!(plain.auc, 0.0);
        let flipped = roc(&s, &labels, Sweep::ScoreValues, true).unwrap();
        assert!(flipped.flipped);
        assert_eq!(flipped.auc, 1.0);
        assert_eq!(flipped.decisions(&s.scores), vec![true, true, false, false]);
    }

    #[test]
    fn fixed_grid_thresholds() {
        let c = roc(&sv(&[0.95, 0.5, 0.05]), &mask(&[true, false, false]), Sweep::FixedGrid { steps: 1000 }, false).unwrap();
        assert_eq!(c.points.len(), 1002);
        assert_eq!(c.auc, 1.0);
    }

    #[test]
    fn matched_filter_on_an_atom() {
        let dict = Dictionary::identity(3);
        let y = Mat::from_fn(3, 3, |i, j| match j {
            0 => [0.0, 2.0, 0.0][i],
            1 => 0.0,
            _ => 1.0,
        });
        let s = matched_filter(y.as_ref(), &dict).unwrap();
        assert_eq!(s.scores[0], 1.0);
        assert_eq!(s.scores[1], 0.0);
        assert!((s.scores[2] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn single_atom_dagger_scores_are_one() {
        let raw = Mat::from_fn(4, 1, |i, _| i as f64 + 1.0);
        let dict = Dictionary::from_raw(raw.as_ref()).unwrap();
        let y = Mat::from_fn(4, 5, |i, j| ((i + 2 * j) % 5) as f64 + 0.5);
        let s = matched_filter_dagger(y.as_ref(), &dict).unwrap();
        assert!(s.scores.iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn empty_grid_is_rejected() {
        let y = Mat::<f64>::identity(2, 2);
        let err = best_auc_over_lambda(
            y.as_ref(),
            &Dictionary::identity(2),
            &mask(&[true, false]),
            &[],
            &ApgConfig::default(),
            Demixer::Xpra,
            false,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
