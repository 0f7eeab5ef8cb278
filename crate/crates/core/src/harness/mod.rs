//! Continual-learning protocols, metrics and analyses.
//!
//! Both protocols learn tasks in order from frozen features. After task `t`
//! the configured classifier is refit from the accumulated statistics and
//! evaluated, without task identity, on the test split of every task seen so
//! far, filling row `t` of the [`ResultMatrix`].

mod diagnostics;
mod memory;
mod metrics;

pub use diagnostics::{per_layer_best_counts, universality_fraction, LayerDiagnostics};
pub use memory::{memory_report, BaselineComparison, MemoryReport};
pub use metrics::ResultMatrix;

use std::fmt::{self, Write as _};
use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accumulator::StatAccumulator;
use crate::error::{Error, Result};
use crate::lambda_search::{optimize_lambda, CandidateScore, LambdaSearchConfig};
use crate::solver::{NmcClassifier, Prediction, RidgeClassifier, SeparateEnsemble};
use crate::types::{concat_features, LayerFeatureSample, TaskStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Cil,
    Ocl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMode {
    /// Per-task held-out search.
    Search(LambdaSearchConfig),
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    /// Shared Gram ridge classifier over the last `k` layers.
    Layup,
    /// Cosine nearest mean on the last layer (`k` must be 1).
    Nmc,
    /// Cosine nearest mean on the last-`k` concatenation.
    Laynmc,
    /// Per-layer ridge classifiers with averaged scores.
    EnsembleSeparate,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Layup => "layup",
            ClassifierKind::Nmc => "nmc",
            ClassifierKind::Laynmc => "laynmc",
            ClassifierKind::EnsembleSeparate => "ensemble-separate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub protocol: Protocol,
    pub k: usize,
    pub lambda_mode: LambdaMode,
    pub classifier: ClassifierKind,
    pub seed: u64,
}

impl RunConfig {
    /// Class-incremental run with the default per-task `λ` search.
    pub fn cil(k: usize) -> Self {
        Self {
            protocol: Protocol::Cil,
            k,
            lambda_mode: LambdaMode::Search(LambdaSearchConfig::default()),
            classifier: ClassifierKind::Layup,
            seed: 0,
        }
    }

    /// Single-pass online run with a fixed `λ`.
    pub fn ocl(k: usize, lambda: f64) -> Self {
        Self {
            protocol: Protocol::Ocl,
            k,
            lambda_mode: LambdaMode::Fixed(lambda),
            classifier: ClassifierKind::Layup,
            seed: 0,
        }
    }

    pub fn with_classifier(mut self, classifier: ClassifierKind) -> Self {
        self.classifier = classifier;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda_mode = LambdaMode::Fixed(lambda);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        match &self.lambda_mode {
            LambdaMode::Search(search) => {
                if self.protocol == Protocol::Ocl {
                    return Err(Error::Config(
                        "the online protocol sees each sample once and needs a fixed lambda".into(),
                    ));
                }
                if self.classifier == ClassifierKind::EnsembleSeparate {
                    return Err(Error::Config(
                        "lambda search is defined for the shared classifier; give the ensemble a fixed lambda"
                            .into(),
                    ));
                }
                search.validate()?;
            }
            LambdaMode::Fixed(l) => {
                if !(*l >= 0.0) || !l.is_finite() {
                    return Err(Error::Config(format!("lambda {l} must be finite and >= 0")));
                }
            }
        }
        if self.classifier == ClassifierKind::Nmc && self.k != 1 {
            return Err(Error::Config(
                "nmc scores the last layer only; use k = 1 or the laynmc classifier".into(),
            ));
        }
        Ok(())
    }

    fn uses_lambda(&self) -> bool {
        matches!(self.classifier, ClassifierKind::Layup | ClassifierKind::EnsembleSeparate)
    }
}

/// Split seed for task `task` of a run seeded with `seed`.
fn task_seed(seed: u64, task: usize) -> u64 {
    seed ^ (task as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

enum LearnerState {
    Shared(StatAccumulator),
    PerLayer(Vec<StatAccumulator>),
}

/// Accumulated statistics for one run configuration.
struct Learner<'a> {
    cfg: &'a RunConfig,
    num_layers: usize,
    state: LearnerState,
}

/// A classifier refit after a task, ready to score raw samples.
pub enum FittedClassifier {
    Ridge { clf: RidgeClassifier, k: usize },
    Nmc { clf: NmcClassifier, k: usize },
    Ensemble { clf: SeparateEnsemble, k: usize },
}

impl FittedClassifier {
    pub fn predict(&self, sample: &LayerFeatureSample) -> Result<Prediction> {
        match self {
            FittedClassifier::Ridge { clf, k } => clf.predict(&concat_features(sample, *k)?),
            FittedClassifier::Nmc { clf, k } => {
                clf.predict_values(&concat_features(sample, *k)?.values)
            }
            FittedClassifier::Ensemble { clf, k } => {
                let layers = sample.num_layers();
                if *k > layers {
                    return Err(Error::range("k", k, format!("1..={layers}")));
                }
                clf.predict(&sample.layer_features[layers - k..])
            }
        }
    }
}

impl<'a> Learner<'a> {
    fn new(cfg: &'a RunConfig, stream: &TaskStream) -> Result<Self> {
        let manifest = &stream.manifest;
        let c = manifest.num_classes;
        let dim = manifest.concat_dim(cfg.k)?;
        let state = match cfg.classifier {
            ClassifierKind::EnsembleSeparate => LearnerState::PerLayer(
                manifest.layer_dims[manifest.num_layers - cfg.k..]
                    .iter()
                    .map(|&d| StatAccumulator::new(d, c, 1))
                    .collect::<Result<_>>()?,
            ),
            _ => LearnerState::Shared(StatAccumulator::new(dim, c, cfg.k)?),
        };
        Ok(Self {
            cfg,
            num_layers: manifest.num_layers,
            state,
        })
    }

    /// Folds in one task. Returns the search outcome when `λ` is searched.
    fn learn_task(
        &mut self,
        task: usize,
        samples: &[LayerFeatureSample],
    ) -> Result<Option<(f64, Vec<CandidateScore>)>> {
        let k = self.cfg.k;
        match (&mut self.state, &self.cfg.lambda_mode) {
            (LearnerState::Shared(acc), LambdaMode::Search(search))
                if self.cfg.classifier == ClassifierKind::Layup =>
            {
                if samples.is_empty() {
                    return Ok(None);
                }
                let search = search.clone().with_seed(task_seed(self.cfg.seed, task));
                let out = optimize_lambda(acc, samples, &search, k)?;
                Ok(Some((out.best_lambda, out.table)))
            }
            (LearnerState::Shared(acc), _) => {
                for s in samples {
                    acc.update(&concat_features(s, k)?, s.label)?;
                }
                Ok(None)
            }
            (LearnerState::PerLayer(accs), _) => {
                let first = self.num_layers - k;
                for s in samples {
                    for (acc, layer) in accs.iter_mut().zip(&s.layer_features[first..]) {
                        acc.update_values(layer, s.label)?;
                    }
                }
                Ok(None)
            }
        }
    }

    fn fit(&self, lambda: Option<f64>) -> Result<FittedClassifier> {
        let k = self.cfg.k;
        let lambda = || lambda.ok_or_else(|| Error::State("no lambda available for the ridge fit".into()));
        Ok(match (&self.state, self.cfg.classifier) {
            (LearnerState::Shared(acc), ClassifierKind::Layup) => FittedClassifier::Ridge {
                clf: RidgeClassifier::fit(acc, lambda()?)?,
                k,
            },
            (LearnerState::Shared(acc), ClassifierKind::Nmc | ClassifierKind::Laynmc) => {
                FittedClassifier::Nmc {
                    clf: NmcClassifier::fit(acc)?,
                    k,
                }
            }
            (LearnerState::PerLayer(accs), ClassifierKind::EnsembleSeparate) => {
                FittedClassifier::Ensemble {
                    clf: SeparateEnsemble::fit(accs, lambda()?)?,
                    k,
                }
            }
            _ => unreachable!("learner state is chosen from the classifier kind"),
        })
    }
}

fn accuracy(clf: &FittedClassifier, samples: &[LayerFeatureSample]) -> Result<f64> {
    let correct = samples
        .par_iter()
        .map(|s| clf.predict(s).map(|p| usize::from(p.label == s.label)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / samples.len() as f64)
}

/// Per-class accuracy over `samples`; `None` for classes absent from them.
pub fn per_class_accuracy(
    clf: &FittedClassifier,
    samples: &[LayerFeatureSample],
    num_classes: usize,
) -> Result<Vec<Option<f64>>> {
    let preds = samples
        .par_iter()
        .map(|s| clf.predict(s).map(|p| p.label))
        .collect::<Result<Vec<_>>>()?;
    let mut total = vec![0usize; num_classes];
    let mut correct = vec![0usize; num_classes];
    for (s, p) in samples.iter().zip(preds) {
        total[s.label] += 1;
        correct[s.label] += usize::from(p == s.label);
    }
    Ok(total
        .iter()
        .zip(&correct)
        .map(|(&n, &c)| (n > 0).then(|| c as f64 / n as f64))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub source: String,
    pub num_layers: usize,
    pub layer_dims: Vec<usize>,
    pub num_classes: usize,
    pub num_tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    /// 1-based task number.
    pub task: usize,
    pub lambda: Option<f64>,
    #[serde(rename = "A_t")]
    pub average_accuracy: f64,
    #[serde(rename = "F_t")]
    pub average_forgetting: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub task: usize,
    pub lambda: f64,
    pub holdout_accuracy: f64,
}

/// Machine-readable record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub stream: StreamSummary,
    pub per_task: Vec<TaskRecord>,
    #[serde(rename = "R")]
    pub result_matrix: ResultMatrix,
    pub lambda_candidates: Vec<CandidateRecord>,
    /// Accuracy per class over all test splits after the last task.
    pub final_class_accuracy: Vec<Option<f64>>,
}

impl RunReport {
    pub fn final_accuracy(&self) -> f64 {
        self.per_task.last().map_or(0.0, |t| t.average_accuracy)
    }

    pub fn final_forgetting(&self) -> Option<f64> {
        self.per_task.last().and_then(|t| t.average_forgetting)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run report serializes") + "\n"
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Plain-text summary: one line per task with `λ`, `A_t`, `F_t`.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        let _ = writeln!(
            out,
            "protocol={:?} classifier={} k={} seed={} source={}",
            c.protocol,
            c.classifier.as_str(),
            c.k,
            c.seed,
            self.stream.source
        );
        let _ = writeln!(out, "{:>5} {:>10} {:>8} {:>8}", "task", "lambda", "A_t", "F_t");
        for t in &self.per_task {
            let lambda = t.lambda.map_or("-".to_string(), |l| format!("{l:.0e}"));
            let f = t
                .average_forgetting
                .map_or("-".to_string(), |f| format!("{:.2}", 100.0 * f));
            let _ = writeln!(
                out,
                "{:>5} {:>10} {:>8.2} {:>8}",
                t.task,
                lambda,
                100.0 * t.average_accuracy,
                f
            );
        }
        out
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.summary_table())
    }
}

/// Class-incremental run: tasks in order, `λ` searched per task when so
/// configured.
pub fn run_cil(stream: &TaskStream, cfg: &RunConfig) -> Result<RunReport> {
    if cfg.protocol != Protocol::Cil {
        return Err(Error::Config("run_cil needs protocol = cil".into()));
    }
    run_phase_b(stream, cfg)
}

/// Online run: every sample updates the statistics exactly once, `λ` fixed.
pub fn run_ocl(stream: &TaskStream, cfg: &RunConfig) -> Result<RunReport> {
    if cfg.protocol != Protocol::Ocl {
        return Err(Error::Config("run_ocl needs protocol = ocl".into()));
    }
    run_phase_b(stream, cfg)
}

pub fn run(stream: &TaskStream, cfg: &RunConfig) -> Result<RunReport> {
    match cfg.protocol {
        Protocol::Cil => run_cil(stream, cfg),
        Protocol::Ocl => run_ocl(stream, cfg),
    }
}

fn check_stream(stream: &TaskStream) -> Result<()> {
    stream.manifest.validate()?;
    stream.check_task_sizes()?;
    if let Some(t) = stream.test.iter().position(Vec::is_empty) {
        return Err(Error::Contract(format!("task {} has no test samples", t + 1)));
    }
    Ok(())
}

fn run_phase_b(stream: &TaskStream, cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    check_stream(stream)?;
    let manifest = &stream.manifest;
    let mut learner = Learner::new(cfg, stream)?;
    let fixed = match cfg.lambda_mode {
        LambdaMode::Fixed(l) => Some(l),
        LambdaMode::Search(_) => None,
    };

    let mut r = ResultMatrix::new();
    let mut per_task = Vec::with_capacity(stream.num_tasks());
    let mut candidates = Vec::new();
    let mut current_lambda = fixed;
    let mut last_clf = None;
    for (t, samples) in stream.train.iter().enumerate() {
        if let Some((best, table)) = learner.learn_task(t, samples)? {
            for c in &table {
                info!(
                    "task {} lambda {:e} holdout accuracy {:.4}",
                    t + 1,
                    c.lambda,
                    c.holdout_accuracy
                );
                candidates.push(CandidateRecord {
                    task: t + 1,
                    lambda: c.lambda,
                    holdout_accuracy: c.holdout_accuracy,
                });
            }
            current_lambda = Some(best);
        }
        let clf = learner.fit(current_lambda)?;
        let row = stream.test[..=t]
            .iter()
            .map(|test| accuracy(&clf, test))
            .collect::<Result<Vec<_>>>()?;
        r.push_row(row)?;
        let average_accuracy = r.average_accuracy(t)?;
        let average_forgetting = if t > 0 { Some(r.average_forgetting(t)?) } else { None };
        info!(
            "task {} A_t {:.4} F_t {}",
            t + 1,
            average_accuracy,
            average_forgetting.map_or("-".into(), |f| format!("{f:.4}"))
        );
        per_task.push(TaskRecord {
            task: t + 1,
            lambda: if cfg.uses_lambda() { current_lambda } else { None },
            average_accuracy,
            average_forgetting,
        });
        last_clf = Some(clf);
    }

    let all_test: Vec<LayerFeatureSample> = stream.test.iter().flatten().cloned().collect();
    let clf = last_clf.expect("manifest has at least one task");
    let final_class_accuracy = per_class_accuracy(&clf, &all_test, manifest.num_classes)?;

    Ok(RunReport {
        config: cfg.clone(),
        stream: StreamSummary {
            source: manifest.source.clone(),
            num_layers: manifest.num_layers,
            layer_dims: manifest.layer_dims.clone(),
            num_classes: manifest.num_classes,
            num_tasks: manifest.num_tasks(),
        },
        per_task,
        result_matrix: r,
        lambda_candidates: candidates,
        final_class_accuracy,
    })
}
