// Fit a ridge classifier from streamed statistics and predict.

use layup::{concat_features, generate_stream, RidgeClassifier, StatAccumulator, SynthConfig};

pub fn run_example() -> layup::Result<f64> {
    let stream = generate_stream(&SynthConfig {
        layer_dims: vec![16; 4],
        num_classes: 10,
        num_tasks: 1,
        train_per_class: 50,
        informativeness: vec![0.3, 0.5, 0.8, 1.0],
        seed: 1,
        ..Default::default()
    })?;
    let k = 2;
    let mut acc = StatAccumulator::new(32, 10, k)?;
    for s in stream.train.iter().flatten() {
        acc.update(&concat_features(s, k)?, s.label)?;
    }
    let clf = RidgeClassifier::fit(&acc, 1.0)?;
    let test: Vec<_> = stream.test.iter().flatten().collect();
    let mut hits = 0;
    for s in &test {
        hits += usize::from(clf.predict(&concat_features(s, k)?)?.label == s.label);
    }
    Ok(hits as f64 / test.len() as f64)
}

fn main() -> layup::Result<()> {
    println!("test accuracy: {:.3}", run_example()?);
    Ok(())
}
