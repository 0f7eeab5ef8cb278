//! Classifiers built from accumulated statistics.
//!
//! * [`RidgeClassifier`]: scores `s_y = Φᵀ (G + λI)⁻¹ c_y`, with `Φ` the
//!   concatenated last-`k` features. With `k = 1` this is the last-layer
//!   Gram classifier.
//! * [`NmcClassifier`]: cosine similarity to mean prototypes (last layer for
//!   `k = 1`, the concatenation otherwise).
//! * [`SeparateEnsemble`]: one ridge classifier per layer, raw scores
//!   averaged with equal weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::accumulator::StatAccumulator;
use crate::error::{Error, Result};
use crate::linalg::{pseudo_inverse_solve, Cholesky, PINV_RELATIVE_TOLERANCE};
use crate::types::ConcatFeature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    FactorizedSolve,
    PseudoInverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub scores: Vec<f64>,
}

impl Prediction {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        Self {
            label: argmax(&scores),
            scores,
        }
    }
}

/// Index of the largest score; ties go to the lowest index. NaN never wins.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, &s) in scores.iter().enumerate() {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

fn check_dim(found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::Contract(format!(
            "feature has dimension {found}, classifier expects {expected}"
        )));
    }
    Ok(())
}

/// Pre-solved ridge weights: row `y` of `weights` is `(G + λI)⁻¹ c_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeClassifier {
    weights: DMatrix<f64>,
    lambda: f64,
    solve_method: SolveMethod,
}

impl RidgeClassifier {
    /// Fits on `acc` with ridge parameter `lambda`.
    ///
    /// For `lambda > 0` the system is positive definite and solved through a
    /// Cholesky factor. For `lambda = 0` the factorization is attempted first
    /// and abandoned for a truncated pseudo-inverse when a pivot falls below
    /// `1e-10 * max(diag G)`, which covers the rank-deficient `N < D` case.
    pub fn fit(acc: &StatAccumulator, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::range("lambda", lambda, "finite and >= 0"));
        }
        if acc.is_empty() {
            return Err(Error::State("cannot fit a classifier on an empty accumulator".into()));
        }
        let mut system = acc.gram().clone();
        for i in 0..system.nrows() {
            system[(i, i)] += lambda;
        }
        if lambda > 0.0 {
            let chol = Cholesky::factor(&system)?;
            return Ok(Self {
                weights: chol.solve_rows(acc.proto_sums()),
                lambda,
                solve_method: SolveMethod::FactorizedSolve,
            });
        }
        let scale = system.diagonal().iter().fold(0.0_f64, |m, &v| m.max(v));
        if let Ok(chol) = Cholesky::factor(&system) {
            if chol.min_pivot() > PINV_RELATIVE_TOLERANCE * scale {
                return Ok(Self {
                    weights: chol.solve_rows(acc.proto_sums()),
                    lambda,
                    solve_method: SolveMethod::FactorizedSolve,
                });
            }
        }
        Ok(Self {
            weights: pseudo_inverse_solve(&system, acc.proto_sums())?,
            lambda,
            solve_method: SolveMethod::PseudoInverse,
        })
    }

    pub(crate) fn from_parts(weights: DMatrix<f64>, lambda: f64, solve_method: SolveMethod) -> Self {
        Self {
            weights,
            lambda,
            solve_method,
        }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn solve_method(&self) -> SolveMethod {
        self.solve_method
    }

    pub fn scores(&self, values: &[f64]) -> Result<Vec<f64>> {
        check_dim(values.len(), self.dim())?;
        Ok(self
            .weights
            .row_iter()
            .map(|w| w.iter().zip(values).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn predict(&self, feat: &ConcatFeature) -> Result<Prediction> {
        self.predict_values(&feat.values)
    }

    pub fn predict_values(&self, values: &[f64]) -> Result<Prediction> {
        Ok(Prediction::from_scores(self.scores(values)?))
    }
}

pub fn fit_ridge(acc: &StatAccumulator, lambda: f64) -> Result<RidgeClassifier> {
    RidgeClassifier::fit(acc, lambda)
}

/// Cosine-similarity nearest-mean classifier.
///
/// Classes without samples keep a `-inf` score so they are never predicted;
/// [`nmc_predict`] and [`laynmc_predict`] instead refuse to run until every
/// class has been seen.
#[derive(Debug, Clone, PartialEq)]
pub struct NmcClassifier {
    /// Unit-norm mean prototypes; `None` for unseen classes.
    directions: Vec<Option<DVector<f64>>>,
    dim: usize,
}

impl NmcClassifier {
    pub fn fit(acc: &StatAccumulator) -> Result<Self> {
        if acc.is_empty() {
            return Err(Error::State("cannot fit a classifier on an empty accumulator".into()));
        }
        let mut directions = Vec::with_capacity(acc.num_classes());
        for y in 0..acc.num_classes() {
            if !acc.has_seen(y) {
                directions.push(None);
                continue;
            }
            let mean = acc.mean_prototype(y)?;
            let norm = mean.norm();
            if !(norm > 0.0) {
                return Err(Error::Numeric(format!("class {y} has a zero-norm mean prototype")));
            }
            directions.push(Some(mean / norm));
        }
        Ok(Self {
            directions,
            dim: acc.dim(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn predict_values(&self, values: &[f64]) -> Result<Prediction> {
        check_dim(values.len(), self.dim)?;
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::Numeric("cosine similarity of a zero-norm feature".into()));
        }
        let scores = self
            .directions
            .iter()
            .map(|d| match d {
                Some(d) => d.iter().zip(values).map(|(a, b)| a * b).sum::<f64>() / norm,
                None => f64::NEG_INFINITY,
            })
            .collect();
        Ok(Prediction::from_scores(scores))
    }
}

fn require_all_seen(acc: &StatAccumulator) -> Result<()> {
    match (0..acc.num_classes()).find(|&y| !acc.has_seen(y)) {
        Some(label) => Err(Error::UnseenClass { label }),
        None => Ok(()),
    }
}

/// Cosine nearest-mean prediction on last-layer features. `acc` must have
/// been built from the last layer only and must have seen every class.
pub fn nmc_predict(acc: &StatAccumulator, last_layer_feat: &[f64]) -> Result<Prediction> {
    require_all_seen(acc)?;
    NmcClassifier::fit(acc)?.predict_values(last_layer_feat)
}

/// Nearest-mean prediction over the concatenated last-`k` features.
pub fn laynmc_predict(acc: &StatAccumulator, feat: &ConcatFeature) -> Result<Prediction> {
    require_all_seen(acc)?;
    NmcClassifier::fit(acc)?.predict_values(&feat.values)
}

/// Independent per-layer ridge classifiers whose score vectors are averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparateEnsemble {
    members: Vec<RidgeClassifier>,
}

impl SeparateEnsemble {
    pub fn fit(per_layer_accs: &[StatAccumulator], lambda: f64) -> Result<Self> {
        if per_layer_accs.is_empty() {
            return Err(Error::Contract("ensemble needs at least one layer".into()));
        }
        let classes = per_layer_accs[0].num_classes();
        if per_layer_accs.iter().any(|a| a.num_classes() != classes) {
            return Err(Error::Contract("per-layer accumulators disagree on num_classes".into()));
        }
        let members = per_layer_accs
            .iter()
            .map(|a| RidgeClassifier::fit(a, lambda))
            .collect::<Result<_>>()?;
        Ok(Self { members })
    }

    pub fn members(&self) -> &[RidgeClassifier] {
        &self.members
    }

    pub fn predict<V: AsRef<[f64]>>(&self, per_layer_feats: &[V]) -> Result<Prediction> {
        if per_layer_feats.len() != self.members.len() {
            return Err(Error::Contract(format!(
                "ensemble has {} layers but {} feature vectors were given",
                self.members.len(),
                per_layer_feats.len()
            )));
        }
        let mut total = vec![0.0; self.members[0].num_classes()];
        for (clf, feat) in self.members.iter().zip(per_layer_feats) {
            for (t, s) in total.iter_mut().zip(clf.scores(feat.as_ref())?) {
                *t += s;
            }
        }
        let n = self.members.len() as f64;
        for t in &mut total {
            *t /= n;
        }
        Ok(Prediction::from_scores(total))
    }
}

pub fn ensemble_separate_predict<V: AsRef<[f64]>>(
    per_layer_accs: &[StatAccumulator],
    per_layer_feats: &[V],
    lambda: f64,
) -> Result<Prediction> {
    if per_layer_accs.len() != per_layer_feats.len() {
        return Err(Error::Contract(format!(
            "{} accumulators but {} feature vectors",
            per_layer_accs.len(),
            per_layer_feats.len()
        )));
    }
    SeparateEnsemble::fit(per_layer_accs, lambda)?.predict(per_layer_feats)
}
