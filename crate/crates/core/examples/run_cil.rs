// Class-incremental run with per-task ridge search.

use layup::{generate_stream, run_cil, RunConfig, RunReport, SynthConfig};

pub fn run_example() -> layup::Result<RunReport> {
    let stream = generate_stream(&SynthConfig {
        layer_dims: vec![16; 6],
        num_classes: 20,
        num_tasks: 5,
        train_per_class: 40,
        informativeness: vec![0.2, 0.4, 0.6, 0.8, 1.0, 0.9],
        separation: 2.0,
        seed: 3,
        ..Default::default()
    })?;
    run_cil(&stream, &RunConfig::cil(4).with_seed(3))
}

fn main() -> layup::Result<()> {
    println!("{}", run_example()?);
    Ok(())
}
