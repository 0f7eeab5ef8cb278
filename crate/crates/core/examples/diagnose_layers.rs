// Which single layer recognizes each class best.

use layup::harness::LayerDiagnostics;
use layup::{generate_stream, per_layer_best_counts, SynthConfig};

pub fn run_example() -> layup::Result<LayerDiagnostics> {
    let stream = generate_stream(&SynthConfig {
        layer_dims: vec![12; 5],
        num_classes: 10,
        num_tasks: 2,
        train_per_class: 40,
        informativeness: vec![0.1, 0.3, 1.0, 0.5, 0.2],
        separation: 3.0,
        seed: 11,
        ..Default::default()
    })?;
    per_layer_best_counts(&stream, 1.0)
}

fn main() -> layup::Result<()> {
    let d = run_example()?;
    for (l, (n, a)) in d.counts.iter().zip(&d.layer_accuracy).enumerate() {
        println!("layer {l}: best for {n:>2} classes, accuracy {a:.3}");
    }
    Ok(())
}
