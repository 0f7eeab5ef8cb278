// Interrupt accumulation, checkpoint, resume, and compare with an
// uninterrupted pass.

use layup::checkpoint::{load_accumulator, save_accumulator};
use layup::{concat_features, generate_stream, StatAccumulator, SynthConfig};

pub fn run_example() -> layup::Result<f64> {
    let stream = generate_stream(&SynthConfig {
        layer_dims: vec![6, 6],
        num_classes: 4,
        num_tasks: 2,
        train_per_class: 50,
        informativeness: vec![0.5, 1.0],
        seed: 5,
        ..Default::default()
    })?;
    let samples: Vec<_> = stream.train.iter().flatten().collect();
    let half = samples.len() / 2;

    let mut whole = StatAccumulator::new(12, 4, 2)?;
    let mut partial = StatAccumulator::new(12, 4, 2)?;
    for (i, s) in samples.iter().enumerate() {
        let f = concat_features(s, 2)?;
        whole.update(&f, s.label)?;
        if i < half {
            partial.update(&f, s.label)?;
        }
    }

    let path = std::env::temp_dir().join("layup-checkpoint-resume.layc");
    save_accumulator(&partial, &path)?;
    let mut resumed = load_accumulator(&path)?;
    for s in &samples[half..] {
        resumed.update(&concat_features(s, 2)?, s.label)?;
    }
    Ok((resumed.gram() - whole.gram()).amax() / whole.gram().amax())
}

fn main() -> layup::Result<()> {
    println!("max relative Gram difference after resume: {:.1e}", run_example()?);
    Ok(())
}
