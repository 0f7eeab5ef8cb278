// Generate a synthetic multi-layer stream and write it to disk.

use layup::feature_io::{write_task_stream, Dtype};
use layup::{generate_stream, SynthConfig};

pub fn run_example() -> layup::Result<String> {
    let stream = generate_stream(&SynthConfig {
        layer_dims: vec![8, 8, 12],
        num_classes: 6,
        num_tasks: 3,
        train_per_class: 20,
        informativeness: vec![0.2, 0.6, 1.0],
        seed: 7,
        ..Default::default()
    })?;
    let dir = std::env::temp_dir().join("layup-gen-synthetic");
    std::fs::create_dir_all(&dir).map_err(|source| layup::Error::Io { path: dir.clone(), source })?;
    let path = dir.join("stream.layf");
    // Writes stream.layf, stream.test.layf and their JSON manifests.
    write_task_stream(&stream, &path, Dtype::F32)?;
    Ok(format!("{}\nwritten to {}", stream.manifest, path.display()))
}

fn main() -> layup::Result<()> {
    println!("{}", run_example()?);
    Ok(())
}
