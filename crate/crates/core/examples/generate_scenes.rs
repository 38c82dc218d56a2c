//! Generates a handful of synthetic stereo scenes, writes them as a dataset
//! directory and reads them back.
//!
//! `cargo run --release --example generate_scenes -- [out_dir] [count]`

use icgnet::synthgen::{generate_dataset, io, SceneConfig};

fn main() -> icgnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "target/scenes".into());
    let count = args.next().and_then(|c| c.parse().ok()).unwrap_or(4);
    let cfg = SceneConfig {
        height: 96,
        width: 128,
        seed: 7,
        ..Default::default()
    };
    let samples = generate_dataset(&cfg, count)?;
    for (i, s) in samples.iter().enumerate() {
        let valid = s.valid_mask.data().iter().filter(|&&v| v).count();
        let occ = s.occ_mask.data().iter().filter(|&&v| v).count();
        let dmax = s.disparity.data().iter().cloned().fold(0.0, f64::max);
        println!(
            "{}: {} valid px, {} occluded px, max disparity {dmax}, {} / {} oracle points",
            io::sample_id(i),
            valid,
            occ,
            s.oracle_points_l.len(),
            s.oracle_points_r.len()
        );
    }
    io::write_dataset(&out, &samples)?;
    let back = io::read_dataset(&out)?;
    assert_eq!(back.len(), samples.len());
    println!("wrote and re-read {} samples in {out}", back.len());
    Ok(())
}
