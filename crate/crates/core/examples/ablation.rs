//! Runs an ablation grid and prints the median table. Without a config file
//! the smoke configuration is used.
//!
//! `cargo run --release --example ablation -- [config.toml] [components|depth] [seeds]`

use std::path::Path;

use icgnet::harness::{run_ablation, AblationGrid, RunConfig, TrainData};

fn main() -> icgnet::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cfg = match args.first().filter(|a| a.as_str() != "-") {
        Some(path) => RunConfig::load(Path::new(path))?,
        None => RunConfig::smoke(),
    };
    let grid = match args.get(1) {
        Some(g) => g.parse()?,
        None => AblationGrid::Components,
    };
    let seeds = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3);
    let mut data = TrainData::load(&cfg)?;
    let report = run_ablation(&cfg, grid, seeds, &mut data)?;
    println!("{}", report.to_markdown());
    Ok(())
}
