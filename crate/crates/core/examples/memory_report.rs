// Storage and inversion cost of the last-six-layer configuration on a
// twelve-layer, 768-wide backbone.

use layup::{memory_report, MemoryReport};

pub fn run_example() -> layup::Result<MemoryReport> {
    memory_report(6, &[768; 12], 200)
}

fn main() -> layup::Result<()> {
    println!("{}", run_example()?);
    Ok(())
}
