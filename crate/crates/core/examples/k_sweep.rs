// Final accuracy as a function of how many trailing layers are concatenated.

use layup::{generate_stream, run_cil, RunConfig, SynthConfig};

pub fn run_example() -> layup::Result<Vec<(usize, f64)>> {
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
    (1..=8)
        .map(|k| Ok((k, run_cil(&stream, &RunConfig::cil(k))?.final_accuracy())))
        .collect()
}

fn main() -> layup::Result<()> {
    for (k, a) in run_example()? {
        println!("k = {k}: A_T = {a:.3}");
    }
    Ok(())
}
