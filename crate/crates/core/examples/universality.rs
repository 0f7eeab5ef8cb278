// Fraction of classes a deep concatenation handles at least as well as the
// last layer alone.

use layup::{generate_stream, universality_fraction, RunConfig, SynthConfig};

pub fn run_example() -> layup::Result<f64> {
    let mut informativeness = vec![0.1; 8];
    informativeness[4] = 1.0;
    informativeness[7] = 0.2;
    let stream = generate_stream(&SynthConfig {
        layer_dims: vec![16; 8],
        num_classes: 20,
        num_tasks: 5,
        train_per_class: 40,
        informativeness,
        separation: 4.0,
        ..Default::default()
    })?;
    universality_fraction(&stream, 6, &RunConfig::cil(6))
}

fn main() -> layup::Result<()> {
    println!("universality: {:.3}", run_example()?);
    Ok(())
}
