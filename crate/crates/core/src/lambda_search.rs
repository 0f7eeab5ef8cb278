//! Per-task selection of the ridge parameter.
//!
//! Each task's training data is split 80:20 per class. The first part is
//! folded into the running statistics, every candidate `λ` is scored by
//! per-sample accuracy on the held-out part, and finally the held-out part
//! is folded in as well. The accumulator therefore ends up identical to one
//! that streamed the whole task, whichever candidate wins.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accumulator::StatAccumulator;
use crate::error::{Error, Result};
use crate::solver::RidgeClassifier;
use crate::types::{concat_features, LayerFeatureSample};

pub const DEFAULT_LAMBDA_CANDIDATES: [f64; 7] = [1e-3, 1e-2, 1e-1, 1e0, 1e1, 1e2, 1e3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSearchConfig {
    pub candidates: Vec<f64>,
    pub split_fraction: f64,
    pub seed: u64,
}

impl Default for LambdaSearchConfig {
    fn default() -> Self {
        Self {
            candidates: DEFAULT_LAMBDA_CANDIDATES.to_vec(),
            split_fraction: 0.8,
            seed: 0,
        }
    }
}

impl LambdaSearchConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::Config("lambda candidate list is empty".into()));
        }
        if let Some(bad) = self.candidates.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
            return Err(Error::Config(format!("lambda candidate {bad} is not a finite value >= 0")));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split fraction {} must lie strictly between 0 and 1",
                self.split_fraction
            )));
        }
        Ok(())
    }
}

/// Result of [`stratified_split`]; both parts borrow from the task.
#[derive(Debug, Clone)]
pub struct Split<'a> {
    pub fit: Vec<&'a LayerFeatureSample>,
    pub holdout: Vec<&'a LayerFeatureSample>,
}

/// Number of samples of an `n`-sample class that go to the fit part.
pub fn fit_count(n: usize, fraction: f64) -> usize {
    // The small offset keeps products like 0.8 * 10 from rounding up past
    // their exact value.
    let raw = (fraction * n as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(n)
}

/// Per-class split: `⌈fraction·n⌉` shuffled samples of each class go to the
/// fit part, the rest to the holdout part. Classes are visited in label
/// order with a single seeded generator.
pub fn stratified_split(
    task_samples: &[LayerFeatureSample],
    fraction: f64,
    seed: u64,
) -> Result<Split<'_>> {
    if task_samples.is_empty() {
        return Err(Error::Contract("cannot split an empty task".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::range("split_fraction", fraction, "strictly between 0 and 1"));
    }
    let mut by_class: BTreeMap<usize, Vec<&LayerFeatureSample>> = BTreeMap::new();
    for s in task_samples {
        by_class.entry(s.label).or_default().push(s);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        fit: Vec::with_capacity(task_samples.len()),
        holdout: Vec::new(),
    };
    for (_, mut members) in by_class {
        members.shuffle(&mut rng);
        let n_fit = fit_count(members.len(), fraction);
        let holdout = members.split_off(n_fit);
        split.fit.extend(members);
        split.holdout.extend(holdout);
    }
    Ok(split)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub lambda: f64,
    pub holdout_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSearchOutcome {
    pub best_lambda: f64,
    /// One entry per candidate, in configuration order.
    pub table: Vec<CandidateScore>,
    pub fit_size: usize,
    pub holdout_size: usize,
}

/// Folds `task_samples` into `acc` while choosing `λ` on a held-out part.
///
/// `acc` may already hold earlier tasks. Holdout predictions range over all
/// classes of the accumulator. Ties in holdout accuracy go to the smaller
/// `λ`; an empty holdout (every class a singleton) scores all candidates 0,
/// so the smallest candidate is returned.
pub fn optimize_lambda(
    acc: &mut StatAccumulator,
    task_samples: &[LayerFeatureSample],
    cfg: &LambdaSearchConfig,
    k: usize,
) -> Result<LambdaSearchOutcome> {
    cfg.validate()?;
    let split = stratified_split(task_samples, cfg.split_fraction, cfg.seed)?;

    let fit_feats = split
        .fit
        .iter()
        .map(|s| concat_features(s, k))
        .collect::<Result<Vec<_>>>()?;
    let holdout_feats = split
        .holdout
        .iter()
        .map(|s| concat_features(s, k))
        .collect::<Result<Vec<_>>>()?;
    if let Some(f) = fit_feats.iter().chain(&holdout_feats).find(|f| f.dim() != acc.dim()) {
        return Err(Error::Contract(format!(
            "feature has dimension {}, accumulator expects {}",
            f.dim(),
            acc.dim()
        )));
    }

    for (f, s) in fit_feats.iter().zip(&split.fit) {
        acc.update(f, s.label)?;
    }

    let snapshot: &StatAccumulator = acc;
    let table = cfg
        .candidates
        .par_iter()
        .map(|&lambda| -> Result<CandidateScore> {
            let clf = RidgeClassifier::fit(snapshot, lambda)?;
            let mut correct = 0usize;
            for (f, s) in holdout_feats.iter().zip(&split.holdout) {
                if clf.predict(f)?.label == s.label {
                    correct += 1;
                }
            }
            let holdout_accuracy = if holdout_feats.is_empty() {
                0.0
            } else {
                correct as f64 / holdout_feats.len() as f64
            };
            Ok(CandidateScore {
                lambda,
                holdout_accuracy,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = table
        .iter()
        .copied()
        .reduce(|best, c| {
            if c.holdout_accuracy > best.holdout_accuracy
                || (c.holdout_accuracy == best.holdout_accuracy && c.lambda < best.lambda)
            {
                c
            } else {
                best
            }
        })
        .expect("candidate list validated non-empty");

    for (f, s) in holdout_feats.iter().zip(&split.holdout) {
        acc.update(f, s.label)?;
    }

    Ok(LambdaSearchOutcome {
        best_lambda: best.lambda,
        table,
        fit_size: split.fit.len(),
        holdout_size: split.holdout.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(per_class: &[usize]) -> Vec<LayerFeatureSample> {
        let mut out = Vec::new();
        let mut i = 0.0;
        for (y, &n) in per_class.iter().enumerate() {
            for _ in 0..n {
                i += 1.0;
                out.push(LayerFeatureSample::new(vec![vec![i, y as f64 + 1.0]], y, 0));
            }
        }
        out
    }

    fn count_label(part: &[&LayerFeatureSample], y: usize) -> usize {
        part.iter().filter(|s| s.label == y).count()
    }

    #[test]
    fn fit_count_ratios() {
        assert_eq!(fit_count(10, 0.8), 8);
        assert_eq!(fit_count(1, 0.8), 1);
        assert_eq!(fit_count(5, 0.8), 4);
        assert_eq!(fit_count(3, 0.8), 3);
        assert_eq!(fit_count(2, 0.5), 1);
    }

    #[test]
    fn split_per_class() {
        let t = task(&[10, 1]);
        let s = stratified_split(&t, 0.8, 1).unwrap();
        assert_eq!(count_label(&s.fit, 0), 8);
        assert_eq!(count_label(&s.holdout, 0), 2);
        assert_eq!(count_label(&s.fit, 1), 1);
        assert_eq!(count_label(&s.holdout, 1), 0);
    }

    #[test]
    fn split_is_seeded() {
        let t = task(&[20; 5]);
        let ids = |s: &Split| -> Vec<f64> { s.fit.iter().map(|x| x.layer_features[0][0]).collect() };
        let a = stratified_split(&t, 0.8, 42).unwrap();
        let b = stratified_split(&t, 0.8, 42).unwrap();
        let c = stratified_split(&t, 0.8, 43).unwrap();
        assert_eq!(ids(&a), ids(&b));
        assert_ne!(ids(&a), ids(&c));
    }

    #[test]
    fn split_errors() {
        assert!(stratified_split(&[], 0.8, 0).is_err());
        assert!(stratified_split(&task(&[2]), 1.0, 0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = LambdaSearchConfig::default();
        cfg.validate().unwrap();
        cfg.candidates.clear();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = LambdaSearchConfig {
            split_fraction: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn single_candidate_equals_plain_accumulation() {
        let t = task(&[6, 7]);
        let mut searched = StatAccumulator::new(2, 2, 1).unwrap();
        let cfg = LambdaSearchConfig {
            candidates: vec![1.0],
            ..Default::default()
        };
        let out = optimize_lambda(&mut searched, &t, &cfg, 1).unwrap();
        assert_eq!(out.best_lambda, 1.0);
        assert_eq!(out.fit_size + out.holdout_size, t.len());

        let mut plain = StatAccumulator::new(2, 2, 1).unwrap();
        for s in &t {
            plain.update_values(&s.layer_features[0], s.label).unwrap();
        }
        assert_eq!(searched.class_counts(), plain.class_counts());
        for (a, b) in searched.gram().iter().zip(plain.gram().iter()) {
            assert!((a - b).abs() <= 1e-10 * b.abs());
        }
    }

    #[test]
    fn empty_candidates_rejected_before_mutation() {
        let t = task(&[3]);
        let mut acc = StatAccumulator::new(2, 1, 1).unwrap();
        let cfg = LambdaSearchConfig {
            candidates: vec![],
            ..Default::default()
        };
        assert!(optimize_lambda(&mut acc, &t, &cfg, 1).is_err());
        assert!(acc.is_empty());
    }
}
