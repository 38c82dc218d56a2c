//! Warps the oracle points of the left view into the right view and reports
//! the ground-truth correspondence sets.

use icgnet::correspondence::{build_gt_matches, DEFAULT_EPS};
use icgnet::synthgen::{generate_scene, SceneConfig};

fn main() -> icgnet::Result<()> {
    let s = generate_scene(&SceneConfig {
        seed: 11,
        ..Default::default()
    })?;
    let gt = build_gt_matches(
        &s.oracle_points_l,
        &s.oracle_points_r,
        &s.disparity,
        &s.valid_mask,
        &s.occ_mask,
        DEFAULT_EPS,
    )?;
    gt.check_invariants(s.oracle_points_l.len(), s.oracle_points_r.len())?;
    println!(
        "{} pairs, {} / {} unmatched, {} / {} excluded",
        gt.pairs.len(),
        gt.unmatched_l.len(),
        gt.unmatched_r.len(),
        gt.excluded_l.len(),
        gt.excluded_r.len()
    );
    for &(i, j) in gt.pairs.iter().take(8) {
        let (xl, yl) = s.oracle_points_l.coords()[i];
        let (xr, yr) = s.oracle_points_r.coords()[j];
        println!("  L{i} ({xl}, {yl}) -> R{j} ({xr}, {yr})");
    }
    Ok(())
}
