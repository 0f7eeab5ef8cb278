// Write a stream file and print its header and first record.

use layup::feature_io::{inspect, write_stream, Dtype, InspectReport};
use layup::{generate_stream, SynthConfig};

pub fn run_example() -> layup::Result<InspectReport> {
    let stream = generate_stream(&SynthConfig {
        layer_dims: vec![4, 6],
        num_classes: 4,
        num_tasks: 2,
        train_per_class: 5,
        informativeness: vec![0.5, 1.0],
        seed: 9,
        ..Default::default()
    })?;
    let path = std::env::temp_dir().join("layup-inspect.layf");
    write_stream(stream.train.iter().flatten(), &stream.manifest, &path, Dtype::F64)?;
    inspect(&path)
}

fn main() -> layup::Result<()> {
    println!("{}", run_example()?);
    Ok(())
}
