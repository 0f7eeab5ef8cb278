use serde::{Deserialize, Serialize};

use super::{run, RunConfig};
use crate::accumulator::StatAccumulator;
use crate::error::{Error, Result};
use crate::solver::RidgeClassifier;
use crate::types::{LayerFeatureSample, TaskStream};

/// Outcome of the per-layer diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDiagnostics {
    /// `counts[l]`: classes whose best single-layer classifier is layer `l`.
    pub counts: Vec<usize>,
    /// Overall test accuracy of each single-layer classifier.
    pub layer_accuracy: Vec<f64>,
    /// `class_accuracy[l][c]`; 0 for classes without test samples.
    pub class_accuracy: Vec<Vec<f64>>,
}

/// Fits one ridge classifier per layer on all training data and assigns
/// every class to the layer whose classifier recognizes it best. Ties go to
/// the deepest layer, so the counts always sum to the number of classes.
pub fn per_layer_best_counts(stream: &TaskStream, lambda: f64) -> Result<LayerDiagnostics> {
    let manifest = &stream.manifest;
    manifest.validate()?;
    let c = manifest.num_classes;
    let test: Vec<&LayerFeatureSample> = stream.test.iter().flatten().collect();

    let mut class_accuracy = Vec::with_capacity(manifest.num_layers);
    let mut layer_accuracy = Vec::with_capacity(manifest.num_layers);
    for (l, &d) in manifest.layer_dims.iter().enumerate() {
        let mut acc = StatAccumulator::new(d, c, 1)?;
        for s in stream.train.iter().flatten() {
            acc.update_values(&s.layer_features[l], s.label)?;
        }
        let clf = RidgeClassifier::fit(&acc, lambda)?;
        let mut total = vec![0usize; c];
        let mut correct = vec![0usize; c];
        for s in &test {
            total[s.label] += 1;
            if clf.predict_values(&s.layer_features[l])?.label == s.label {
                correct[s.label] += 1;
            }
        }
        let hits: usize = correct.iter().sum();
        layer_accuracy.push(if test.is_empty() { 0.0 } else { hits as f64 / test.len() as f64 });
        class_accuracy.push(
            total
                .iter()
                .zip(&correct)
                .map(|(&n, &k)| if n == 0 { 0.0 } else { k as f64 / n as f64 })
                .collect::<Vec<_>>(),
        );
    }

    let mut counts = vec![0usize; manifest.num_layers];
    for class in 0..c {
        let mut best_layer = 0;
        for l in 1..manifest.num_layers {
            if class_accuracy[l][class] >= class_accuracy[best_layer][class] {
                best_layer = l;
            }
        }
        counts[best_layer] += 1;
    }
    Ok(LayerDiagnostics {
        counts,
        layer_accuracy,
        class_accuracy,
    })
}

/// Share of classes whose final accuracy with the last `k_big` layers is at
/// least their accuracy with the last layer alone. Classes without test
/// samples are left out.
pub fn universality_fraction(stream: &TaskStream, k_big: usize, cfg: &RunConfig) -> Result<f64> {
    if k_big == 0 {
        return Err(Error::range("k_big", k_big, ">= 1"));
    }
    let big = run(stream, &cfg.clone().with_k(k_big))?;
    let last = run(stream, &cfg.clone().with_k(1))?;
    let pairs: Vec<(f64, f64)> = big
        .final_class_accuracy
        .iter()
        .zip(&last.final_class_accuracy)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::State("no class has test samples".into()));
    }
    let wins = pairs.iter().filter(|(a, b)| a >= b).count();
    Ok(wins as f64 / pairs.len() as f64)
}

