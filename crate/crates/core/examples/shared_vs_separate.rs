// One ridge model over concatenated layers against an ensemble of per-layer
// models on correlated layers.

use layup::{generate_stream, run_cil, ClassifierKind, RunConfig, SynthConfig};

pub fn run_example() -> layup::Result<(f64, f64)> {
    let stream = generate_stream(&SynthConfig {
        layer_dims: vec![16; 4],
        num_classes: 20,
        num_tasks: 5,
        train_per_class: 40,
        informativeness: vec![0.6; 4],
        coupling: 0.7,
        latent_dim: 8,
        separation: 1.0,
        seed: 2,
        ..Default::default()
    })?;
    let cfg = RunConfig::cil(4).with_lambda(1.0);
    let shared = run_cil(&stream, &cfg)?.final_accuracy();
    let separate = run_cil(&stream, &cfg.with_classifier(ClassifierKind::EnsembleSeparate))?.final_accuracy();
    Ok((shared, separate))
}

fn main() -> layup::Result<()> {
    let (shared, separate) = run_example()?;
    println!("shared {shared:.3}, separate {separate:.3}");
    Ok(())
}
