//! Deterministic multi-layer synthetic feature streams.
//!
//! Each class `c` has a fixed mean `μ_{c,l}` at every layer `l`, with norm
//! `separation · s_l` (or `separation` on the class's assigned informative
//! layer only, when an override is given). A sample's layer-`l` feature is
//!
//! ```text
//! x_l = μ_{c,l} + shift_{t,l} + σ · (ρ · B_l z + (1 - ρ) · D_l ε_l)
//! ```
//!
//! where `z` is one latent draw shared by all layers of the sample, `B_l` is
//! a fixed mixing map, `D_l` a diagonal noise profile spanning
//! `[1/condition_spread, 1]`, and `ε_l` independent noise. The output is a
//! pure function of the configuration.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{LayerFeatureSample, StreamManifest, TaskStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub layer_dims: Vec<usize>,
    pub num_classes: usize,
    pub num_tasks: usize,
    /// Training samples generated per class.
    pub train_per_class: usize,
    /// Share of each class's samples reserved for testing.
    pub test_fraction: f64,
    /// Per-layer weight `s_l` scaling the class-mean norm.
    pub informativeness: Vec<f64>,
    /// Optional per-class informative layer (0-based); overrides
    /// `informativeness` when present.
    pub informative_layer: Option<Vec<usize>>,
    /// Cross-layer coupling `ρ`: share of noise drawn from the shared latent.
    pub coupling: f64,
    /// Noise scale `σ`.
    pub noise: f64,
    /// Class-mean norm at `s_l = 1`.
    pub separation: f64,
    /// When set, class means are confined to the first `n` coordinates of
    /// each layer, which are also the noisiest under `condition_spread`.
    pub informative_dims: Option<usize>,
    pub latent_dim: usize,
    /// Ratio between the largest and smallest per-dimension noise scale.
    pub condition_spread: f64,
    /// Norm of a per-task, per-layer offset added to every sample of a task.
    pub task_shift: f64,
    /// When set, the second half of every layer copies the first half plus
    /// `jitter · σ` independent noise.
    pub duplicate_jitter: Option<f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            layer_dims: vec![16; 4],
            num_classes: 10,
            num_tasks: 5,
            train_per_class: 40,
            test_fraction: 0.2,
            informativeness: vec![1.0; 4],
            informative_layer: None,
            coupling: 0.0,
            noise: 1.0,
            separation: 4.0,
            latent_dim: 8,
            condition_spread: 1.0,
            task_shift: 0.0,
            duplicate_jitter: None,
            informative_dims: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn num_layers(&self) -> usize {
        self.layer_dims.len()
    }

    /// Test samples per class: `train · f / (1 - f)`, rounded, at least 1.
    pub fn test_per_class(&self) -> usize {
        let n = self.train_per_class as f64 * self.test_fraction / (1.0 - self.test_fraction);
        (n.round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.num_layers();
        if l == 0 || self.layer_dims.contains(&0) {
            return Err(Error::Config("layer_dims must be non-empty and positive".into()));
        }
        if self.num_classes == 0 || self.num_tasks == 0 || self.train_per_class == 0 {
            return Err(Error::Config(
                "num_classes, num_tasks and train_per_class must be positive".into(),
            ));
        }
        if self.num_tasks > self.num_classes {
            return Err(Error::Config(format!(
                "{} tasks cannot partition {} classes",
                self.num_tasks, self.num_classes
            )));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config("test_fraction must lie strictly between 0 and 1".into()));
        }
        match &self.informative_layer {
            Some(assign) => {
                if assign.len() != self.num_classes || assign.iter().any(|&a| a >= l) {
                    return Err(Error::Config(
                        "informative_layer needs one layer index below L per class".into(),
                    ));
                }
            }
            None => {
                if self.informativeness.len() != l {
                    return Err(Error::Config(format!(
                        "informativeness has {} entries for {l} layers",
                        self.informativeness.len()
                    )));
                }
                if self.informativeness.iter().any(|s| !(0.0..=1.0).contains(s)) {
                    return Err(Error::Config("informativeness weights must lie in [0, 1]".into()));
                }
                if !self.informativeness.iter().any(|&s| s > 0.0) {
                    return Err(Error::Config("at least one layer must be informative".into()));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.coupling) {
            return Err(Error::Config("coupling must lie in [0, 1]".into()));
        }
        if !(self.noise > 0.0) || !self.noise.is_finite() {
            return Err(Error::Config("noise must be positive".into()));
        }
        if !(self.separation >= 0.0) || !(self.task_shift >= 0.0) {
            return Err(Error::Config("separation and task_shift must be non-negative".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be positive".into()));
        }
        if !(self.condition_spread >= 1.0) || !self.condition_spread.is_finite() {
            return Err(Error::Config("condition_spread must be >= 1".into()));
        }
        if self.informative_dims == Some(0) {
            return Err(Error::Config("informative_dims must be positive".into()));
        }
        if let Some(j) = self.duplicate_jitter {
            if !(j >= 0.0) {
                return Err(Error::Config("duplicate_jitter must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Mean-norm weight of class `class` at layer `layer`.
    fn mean_weight(&self, class: usize, layer: usize) -> f64 {
        match &self.informative_layer {
            Some(assign) => f64::from(u8::from(assign[class] == layer)),
            None => self.informativeness[layer],
        }
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, n);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fixed per-stream structure: means, mixing maps, noise profiles, shifts.
struct Structure {
    /// `means[c][l]`
    means: Vec<Vec<Vec<f64>>>,
    /// `mixing[l]`, row-major `d_l x latent_dim`.
    mixing: Vec<Vec<f64>>,
    /// `noise_profile[l][i]`
    noise_profile: Vec<Vec<f64>>,
    /// `shifts[t][l]`
    shifts: Vec<Vec<Vec<f64>>>,
    /// `task_of_class[c]`
    task_of_class: Vec<usize>,
}

impl Structure {
    fn build(cfg: &SynthConfig) -> Self {
        let mut rng = stream_rng(cfg.seed, 0);
        let dims = &cfg.layer_dims;

        let mut order: Vec<usize> = (0..cfg.num_classes).collect();
        order.shuffle(&mut rng);
        let mut task_of_class = vec![0; cfg.num_classes];
        for (pos, &c) in order.iter().enumerate() {
            task_of_class[c] = pos * cfg.num_tasks / cfg.num_classes;
        }

        let means = (0..cfg.num_classes)
            .map(|c| {
                dims.iter()
                    .enumerate()
                    .map(|(l, &d)| {
                        let scale = cfg.separation * cfg.mean_weight(c, l);
                        let active = cfg.informative_dims.map_or(d, |n| n.min(d));
                        let mut mean: Vec<f64> = unit_vec(&mut rng, active).into_iter().map(|x| x * scale).collect();
                        mean.resize(d, 0.0);
                        mean
                    })
                    .collect()
            })
            .collect();

        let mix_scale = 1.0 / (cfg.latent_dim as f64).sqrt();
        let mixing = dims
            .iter()
            .map(|&d| {
                gaussian_vec(&mut rng, d * cfg.latent_dim)
                    .into_iter()
                    .map(|x| x * mix_scale)
                    .collect()
            })
            .collect();

        let noise_profile = dims
            .iter()
            .map(|&d| {
                (0..d)
                    .map(|i| {
                        let frac = if d > 1 { i as f64 / (d - 1) as f64 } else { 0.0 };
                        cfg.condition_spread.powf(-frac)
                    })
                    .collect()
            })
            .collect();

        let shifts = (0..cfg.num_tasks)
            .map(|_| {
                dims.iter()
                    .map(|&d| {
                        unit_vec(&mut rng, d)
                            .into_iter()
                            .map(|x| x * cfg.task_shift)
                            .collect()
                    })
                    .collect()
            })
            .collect();

        Self {
            means,
            mixing,
            noise_profile,
            shifts,
            task_of_class,
        }
    }

    fn sample(&self, cfg: &SynthConfig, class: usize, rng: &mut ChaCha8Rng) -> LayerFeatureSample {
        let task = self.task_of_class[class];
        let z = gaussian_vec(rng, cfg.latent_dim);
        let rho = cfg.coupling;
        let layers = cfg
            .layer_dims
            .iter()
            .enumerate()
            .map(|(l, &d)| {
                let mix = &self.mixing[l];
                let mut x: Vec<f64> = (0..d)
                    .map(|i| {
                        let shared: f64 = mix[i * cfg.latent_dim..(i + 1) * cfg.latent_dim]
                            .iter()
                            .zip(&z)
                            .map(|(b, z)| b * z)
                            .sum();
                        let own: f64 = rng.sample::<f64, _>(StandardNormal) * self.noise_profile[l][i];
                        self.means[class][l][i]
                            + self.shifts[task][l][i]
                            + cfg.noise * (rho * shared + (1.0 - rho) * own)
                    })
                    .collect();
                if let Some(jitter) = cfg.duplicate_jitter {
                    let half = d / 2;
                    for i in 0..half {
                        let eps: f64 = rng.sample(StandardNormal);
                        x[d - half + i] = x[i] + jitter * cfg.noise * eps;
                    }
                }
                x
            })
            .collect();
        LayerFeatureSample::new(layers, class, task)
    }
}

/// Generates the train and test splits described by `cfg`.
pub fn generate_stream(cfg: &SynthConfig) -> Result<TaskStream> {
    cfg.validate()?;
    let structure = Structure::build(cfg);
    let n_train = cfg.train_per_class;
    let n_test = cfg.test_per_class();

    let mut train: Vec<Vec<LayerFeatureSample>> = vec![Vec::new(); cfg.num_tasks];
    let mut test: Vec<Vec<LayerFeatureSample>> = vec![Vec::new(); cfg.num_tasks];
    for class in 0..cfg.num_classes {
        let mut rng = stream_rng(cfg.seed, 1 + class as u64);
        let task = structure.task_of_class[class];
        for _ in 0..n_train {
            train[task].push(structure.sample(cfg, class, &mut rng));
        }
        for _ in 0..n_test {
            test[task].push(structure.sample(cfg, class, &mut rng));
        }
    }
    for (t, samples) in train.iter_mut().enumerate() {
        let mut rng = stream_rng(cfg.seed, 1 + cfg.num_classes as u64 + t as u64);
        samples.shuffle(&mut rng);
    }

    let mut label_spaces = vec![Vec::new(); cfg.num_tasks];
    for (c, &t) in structure.task_of_class.iter().enumerate() {
        label_spaces[t].push(c);
    }
    let manifest = StreamManifest {
        num_layers: cfg.num_layers(),
        layer_dims: cfg.layer_dims.clone(),
        num_classes: cfg.num_classes,
        task_sizes: train.iter().map(Vec::len).collect(),
        task_label_spaces: label_spaces,
        source: format!("synthgen seed={}", cfg.seed),
    };
    manifest.validate()?;
    let stream = TaskStream {
        manifest,
        train,
        test,
    };
    stream.check_task_sizes()?;
    Ok(stream)
}
