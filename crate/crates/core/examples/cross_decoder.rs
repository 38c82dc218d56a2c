//! Runs an untrained cross-view decoder on one scene and checks the
//! transport matrix produced by Sinkhorn normalization.

use icgnet::autograd::Graph;
use icgnet::decoders::{cross_decode, init_cross, Assignment, DecoderConfig};
use icgnet::stereonet::{sample_descriptors, BackboneConfig, StereoNet, View};
use icgnet::synthgen::{generate_scene, SceneConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> icgnet::Result<()> {
    let s = generate_scene(&SceneConfig {
        height: 64,
        width: 96,
        d_max: 24.0,
        seed: 5,
        ..Default::default()
    })?;
    let net = StereoNet::new(BackboneConfig {
        channels: 16,
        blocks: 2,
        groups: 4,
        agg_channels: 4,
        max_disparity: 32,
        ..Default::default()
    })?;
    let cfg = DecoderConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut params = net.init_params(&mut rng);
    init_cross(&mut params, &mut rng, 16, &cfg);

    let g = Graph::new();
    let p = params.bind_frozen(&g);
    let fp = net.extract_features(&p, &s.left, &s.right)?;
    let (pl, pr) = (&s.oracle_points_l, &s.oracle_points_r);
    let dl = sample_descriptors(&fp, pl, View::Left)?;
    let dr = sample_descriptors(&fp, pr, View::Right)?;
    let transport = cross_decode(&p, &cfg, (pl, pr), (&dl, &dr), s.dims())?;
    let a = Assignment::from_transport(&transport.value())?;
    println!(
        "{} x {} points, {} Sinkhorn iterations, marginal error {:.2e}",
        a.m(),
        a.n(),
        cfg.sinkhorn_iters,
        a.marginal_error()
    );
    Ok(())
}
