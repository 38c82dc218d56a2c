//! Trains the smoke configuration in memory, prints the loss trace and
//! saves a checkpoint.
//!
//! `cargo run --release --example train_smoke -- [out.ckpt]`

use icgnet::harness::{train, RunConfig};

fn main() -> icgnet::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/smoke.ckpt".into());
    let cfg = RunConfig::smoke();
    let report = train(&cfg)?;
    for r in report.log.iter().step_by(24) {
        let t = &r.terms;
        println!(
            "step {:4}  disp {:.4}  intra {:.5}  soft {:.4}  hard {:.4}  total {:.4}  lr {:.1e}",
            r.step, t.disp, t.intra, t.cross_soft, t.cross_hard, r.total, r.lr
        );
    }
    if let Some((step, s)) = report.validation.last() {
        println!("validation at step {step}: {s}");
    }
    report.checkpoint.save(out.as_ref())?;
    println!("checkpoint written to {out}");
    Ok(())
}
