//! Shared data model: per-layer feature samples, stream manifests, task
//! streams and the last-`k` layer concatenation used by every classifier.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labeled sample: the feature vector read from each of the `L` layers
/// of a frozen backbone, in layer order (first layer first).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerFeatureSample {
    pub layer_features: Vec<Vec<f64>>,
    pub label: usize,
    pub task_id: usize,
}

impl LayerFeatureSample {
    pub fn new(layer_features: Vec<Vec<f64>>, label: usize, task_id: usize) -> Self {
        Self {
            layer_features,
            label,
            task_id,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layer_features.len()
    }

    /// Features of the deepest layer.
    pub fn last_layer(&self) -> &[f64] {
        self.layer_features.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Describes the shape and task partition of a feature stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamManifest {
    pub num_layers: usize,
    pub layer_dims: Vec<usize>,
    pub num_classes: usize,
    pub task_sizes: Vec<usize>,
    pub task_label_spaces: Vec<Vec<usize>>,
    #[serde(default)]
    pub source: String,
}

impl StreamManifest {
    pub fn num_tasks(&self) -> usize {
        self.task_sizes.len()
    }

    pub fn total_samples(&self) -> usize {
        self.task_sizes.iter().sum()
    }

    /// Dimension of the concatenation of the last `k` layers.
    pub fn concat_dim(&self, k: usize) -> Result<usize> {
        check_k(k, self.num_layers)?;
        Ok(self.layer_dims[self.num_layers - k..].iter().sum())
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(Error::range("num_layers", 0, ">= 1"));
        }
        if self.layer_dims.len() != self.num_layers {
            return Err(Error::Contract(format!(
                "manifest lists {} layer dims for {} layers",
                self.layer_dims.len(),
                self.num_layers
            )));
        }
        if let Some(l) = self.layer_dims.iter().position(|&d| d == 0) {
            return Err(Error::range("layer_dims", format!("0 at layer {}", l + 1), ">= 1"));
        }
        if self.num_classes == 0 {
            return Err(Error::range("num_classes", 0, ">= 1"));
        }
        if self.task_sizes.is_empty() {
            return Err(Error::range("num_tasks", 0, ">= 1"));
        }
        if self.task_label_spaces.len() != self.task_sizes.len() {
            return Err(Error::Contract(format!(
                "manifest has {} task sizes but {} task label spaces",
                self.task_sizes.len(),
                self.task_label_spaces.len()
            )));
        }
        let union: BTreeSet<usize> = self.task_label_spaces.iter().flatten().copied().collect();
        if union.len() != self.num_classes || union.iter().any(|&c| c >= self.num_classes) {
            return Err(Error::Contract(format!(
                "task label spaces cover {} distinct labels, expected exactly 0..{}",
                union.len(),
                self.num_classes
            )));
        }
        Ok(())
    }

    /// True when `other` describes the same feature space and task partition
    /// (sample counts may differ, as between train and test splits).
    pub fn same_layout(&self, other: &StreamManifest) -> bool {
        self.num_layers == other.num_layers
            && self.layer_dims == other.layer_dims
            && self.num_classes == other.num_classes
            && self.task_label_spaces == other.task_label_spaces
    }
}

/// A manifest invariant broken by a sample. Layers are numbered from 1.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SampleViolation {
    #[error("sample has {found} layers, manifest declares {expected}")]
    LayerCount { expected: usize, found: usize },
    #[error("layer {layer} has dimension {found}, manifest declares {expected}")]
    DimensionMismatch {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("layer {layer} index {index} is not finite ({value})")]
    NonFinite { layer: usize, index: usize, value: f64 },
    #[error("label {label} is not below num_classes {num_classes}")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("task id {task_id} is not below num_tasks {num_tasks}")]
    TaskOutOfRange { task_id: usize, num_tasks: usize },
}

/// Checks `sample` against `manifest`, returning the first broken invariant.
pub fn validate_sample(
    sample: &LayerFeatureSample,
    manifest: &StreamManifest,
) -> Result<(), SampleViolation> {
    if sample.layer_features.len() != manifest.num_layers {
        return Err(SampleViolation::LayerCount {
            expected: manifest.num_layers,
            found: sample.layer_features.len(),
        });
    }
    for (l, (values, &expected)) in sample
        .layer_features
        .iter()
        .zip(&manifest.layer_dims)
        .enumerate()
    {
        if values.len() != expected {
            return Err(SampleViolation::DimensionMismatch {
                layer: l + 1,
                expected,
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(SampleViolation::NonFinite {
                layer: l + 1,
                index,
                value: values[index],
            });
        }
    }
    if sample.label >= manifest.num_classes {
        return Err(SampleViolation::LabelOutOfRange {
            label: sample.label,
            num_classes: manifest.num_classes,
        });
    }
    if sample.task_id >= manifest.num_tasks() {
        return Err(SampleViolation::TaskOutOfRange {
            task_id: sample.task_id,
            num_tasks: manifest.num_tasks(),
        });
    }
    Ok(())
}

/// Features of the last `k` layers joined in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatFeature {
    pub values: Vec<f64>,
    pub k: usize,
}

impl ConcatFeature {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

fn check_k(k: usize, num_layers: usize) -> Result<()> {
    if k == 0 || k > num_layers {
        return Err(Error::range("k", k, format!("1..={num_layers} (L = {num_layers})")));
    }
    Ok(())
}

/// Joins the last `k` layer vectors of `sample`, layer `L-k+1` first.
pub fn concat_features(sample: &LayerFeatureSample, k: usize) -> Result<ConcatFeature> {
    let layers = sample.num_layers();
    check_k(k, layers)?;
    let tail = &sample.layer_features[layers - k..];
    let mut values = Vec::with_capacity(tail.iter().map(Vec::len).sum());
    for layer in tail {
        values.extend_from_slice(layer);
    }
    Ok(ConcatFeature { values, k })
}

/// Train and test splits of a task sequence. `train[t]` holds task `t`'s
/// training samples in stream order.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    pub manifest: StreamManifest,
    pub train: Vec<Vec<LayerFeatureSample>>,
    pub test: Vec<Vec<LayerFeatureSample>>,
}

impl TaskStream {
    /// Groups flat train/test sample lists by task id and validates every
    /// sample against the manifest.
    pub fn from_samples(
        manifest: StreamManifest,
        train: Vec<LayerFeatureSample>,
        test: Vec<LayerFeatureSample>,
    ) -> Result<Self> {
        manifest.validate()?;
        let t = manifest.num_tasks();
        let mut train_tasks = vec![Vec::new(); t];
        let mut test_tasks = vec![Vec::new(); t];
        for s in train {
            validate_sample(&s, &manifest)?;
            train_tasks[s.task_id].push(s);
        }
        for s in test {
            validate_sample(&s, &manifest)?;
            test_tasks[s.task_id].push(s);
        }
        let stream = Self {
            manifest,
            train: train_tasks,
            test: test_tasks,
        };
        stream.check_task_sizes()?;
        Ok(stream)
    }

    pub fn num_tasks(&self) -> usize {
        self.manifest.num_tasks()
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.num_classes
    }

    /// Verifies train task sizes against the manifest and that every sample
    /// sits in its own task's slot.
    pub fn check_task_sizes(&self) -> Result<()> {
        let t = self.num_tasks();
        if self.train.len() != t || self.test.len() != t {
            return Err(Error::Contract(format!(
                "stream holds {} train / {} test tasks, manifest declares {t}",
                self.train.len(),
                self.test.len()
            )));
        }
        for (task, samples) in self.train.iter().enumerate() {
            if samples.len() != self.manifest.task_sizes[task] {
                return Err(Error::Contract(format!(
                    "task {} has {} training samples, manifest declares {}",
                    task + 1,
                    samples.len(),
                    self.manifest.task_sizes[task]
                )));
            }
        }
        for (task, samples) in self.train.iter().chain(&self.test).enumerate() {
            let task = task % t;
            if let Some(s) = samples.iter().find(|s| s.task_id != task) {
                return Err(Error::Contract(format!(
                    "sample with task id {} stored under task {}",
                    s.task_id, task
                )));
            }
        }
        Ok(())
    }

    /// Manifest describing the test split (same layout, test task sizes).
    pub fn test_manifest(&self) -> StreamManifest {
        StreamManifest {
            task_sizes: self.test.iter().map(Vec::len).collect(),
            ..self.manifest.clone()
        }
    }
}

impl fmt::Display for StreamManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "L={} dims={:?} C={} T={} N={}",
            self.num_layers,
            self.layer_dims,
            self.num_classes,
            self.num_tasks(),
            self.total_samples()
        )
    }
}
