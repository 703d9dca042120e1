//! Times a short training run on a freshly synthesized dataset.
//!
//! Usage: `cargo run --release -p uwstyle-core --example train_probe -- <dir> <steps> [config.toml]`

use std::path::PathBuf;
use std::time::Instant;

use uwstyle_core::datasynth::build_dataset;
use uwstyle_core::trainer::{train, TrainConfig};

fn main() -> uwstyle_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "/tmp/uwstyle_probe".into()));
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let manifest = build_dataset(0, 64, &dir.join("data"))?;
    let base = match args.next() {
        Some(path) => TrainConfig::from_toml(&std::fs::read_to_string(&path).expect("config file"))?,
        None => TrainConfig::default(),
    };
    let config = TrainConfig { steps, ..base };
    let start = Instant::now();
    let ckpt = train(config, &manifest, &dir.join("run"), None)?;
    let secs = start.elapsed().as_secs_f64();
    println!("{steps} steps in {secs:.1}s ({:.3}s/step) -> {}", secs / steps as f64, ckpt.display());
    Ok(())
}
