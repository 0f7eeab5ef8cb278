//! Class-incremental and online continual classification on frozen,
//! multi-layer features.
//!
//! The learner keeps only streaming statistics: the Gram matrix of the
//! concatenated last-`k` layer features and per-class prototype sums. After
//! each task a closed-form ridge classifier is solved from them, so nothing
//! is replayed and stream order does not matter.
//!
//! ```
//! use layup::{concat_features, LayerFeatureSample, RidgeClassifier, StatAccumulator};
//!
//! let samples = [
//!     LayerFeatureSample::new(vec![vec![1.0, 0.0], vec![0.9]], 0, 0),
//!     LayerFeatureSample::new(vec![vec![0.0, 1.0], vec![-1.1]], 1, 0),
//! ];
//! let mut acc = StatAccumulator::new(3, 2, 2).unwrap();
//! for s in &samples {
//!     acc.update(&concat_features(s, 2).unwrap(), s.label).unwrap();
//! }
//! let clf = RidgeClassifier::fit(&acc, 1.0).unwrap();
//! let pred = clf.predict(&concat_features(&samples[1], 2).unwrap()).unwrap();
//! assert_eq!(pred.label, 1);
//! ```

pub mod accumulator;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod feature_io;
pub mod harness;
pub mod lambda_search;
pub mod linalg;
pub mod solver;
pub mod synthgen;
pub mod types;

pub use accumulator::StatAccumulator;
pub use error::{Error, ErrorCategory, Result};
pub use harness::{
    memory_report, per_layer_best_counts, run_cil, run_ocl, universality_fraction, ClassifierKind,
    LambdaMode, MemoryReport, Protocol, ResultMatrix, RunConfig, RunReport,
};
pub use lambda_search::{optimize_lambda, stratified_split, LambdaSearchConfig};
pub use solver::{
    ensemble_separate_predict, fit_ridge, laynmc_predict, nmc_predict, NmcClassifier, Prediction,
    RidgeClassifier, SeparateEnsemble, SolveMethod,
};
pub use synthgen::{generate_stream, SynthConfig};
pub use types::{
    concat_features, validate_sample, ConcatFeature, LayerFeatureSample, SampleViolation,
    StreamManifest, TaskStream,
};
