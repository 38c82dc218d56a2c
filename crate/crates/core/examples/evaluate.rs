//! Evaluates a checkpoint with and without its decoder weights. Both runs
//! see only the stereo network, so the metrics agree bit for bit.
//!
//! `cargo run --release --example evaluate -- [ckpt]` (trains a smoke model
//! when no checkpoint is given)

use icgnet::harness::{evaluate, train, Checkpoint, RunConfig, TrainData};

fn main() -> icgnet::Result<()> {
    let ckpt = match std::env::args().nth(1) {
        Some(path) => Checkpoint::load(path.as_ref())?,
        None => {
            let mut cfg = RunConfig::smoke();
            cfg.optim.epochs = 2;
            train(&cfg)?.checkpoint
        }
    };
    let data = TrainData::load(&ckpt.config)?;
    let full = evaluate(&ckpt, &data.val)?;
    let stripped = evaluate(&ckpt.stripped(), &data.val)?;
    println!("full:     {}", full.overall);
    println!("stripped: {}", stripped.overall);
    println!(
        "decoder tensors dropped: {}, identical metrics: {}",
        ckpt.params.len() - ckpt.stripped().params.len(),
        full == stripped
    );
    Ok(())
}
