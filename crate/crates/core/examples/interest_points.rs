//! Runs the oracle and Harris detectors on one scene and thins both maps
//! with non-maximum suppression.

use icgnet::interest::{nms_filter, Detector, HarrisDetector, NmsParams, OracleDetector};
use icgnet::synthgen::{generate_scene, SceneConfig};

fn main() -> icgnet::Result<()> {
    let scene = generate_scene(&SceneConfig {
        seed: 3,
        ..Default::default()
    })?;
    let nms = NmsParams::default();
    let oracle = OracleDetector::default().detect(&scene.left, Some(&scene.oracle_points_l));
    let harris = HarrisDetector::default().detect(&scene.left, None);
    for (name, map) in [("oracle", &oracle), ("harris", &harris)] {
        let pts = nms_filter(map, nms.radius, nms.threshold, nms.max_points)?.into_canonical_order();
        println!("{name}: {} points after NMS", pts.len());
        for ((x, y), s) in pts.iter().take(5) {
            println!("  ({x:5.1}, {y:5.1}) score {s:.3}");
        }
    }
    Ok(())
}
