//! Train-time heads: the intra-view interest decoder and the cross-view
//! attention matcher with Sinkhorn normalization.
//!
//! All decoder weights live under the `intra.` and `cross.` prefixes so a
//! checkpoint can drop them wholesale.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::interest::PointSet;
use crate::nn::{self, Bound, ParamStore};
use crate::stereonet::{DescriptorSet, FeaturePair};
use crate::tensor::Tensor;

pub const INTRA_PREFIX: &str = "intra.";
pub const CROSS_PREFIX: &str = "cross.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    /// Bottleneck blocks in the intra-view decoder.
    pub intra_blocks: usize,
    /// Attention layers in the cross-view decoder; 0 selects plain cosine scores.
    pub cross_layers: usize,
    pub heads: usize,
    pub sinkhorn_iters: usize,
    /// Hidden width of the positional encoder.
    pub pos_hidden: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            intra_blocks: 2,
            cross_layers: 4,
            heads: 4,
            sinkhorn_iters: 100,
            pos_hidden: 32,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self, channels: usize) -> Result<()> {
        if self.heads == 0 || channels % self.heads != 0 {
            return Err(Error::Config(format!(
                "channels {channels} must split evenly into {} heads",
                self.heads
            )));
        }
        if self.pos_hidden == 0 {
            return Err(Error::Config("pos_hidden must be positive".into()));
        }
        Ok(())
    }
}

/// Prior probability of a positive pixel used to bias the interest head.
const INTEREST_PRIOR: f64 = 0.01;

/// Adds intra-view decoder weights for `channels`-wide features.
pub fn init_intra(store: &mut ParamStore, rng: &mut impl Rng, channels: usize, blocks: usize) {
    let mid = (channels / 4).max(1);
    for b in 0..blocks {
        nn::add_conv2d(store, rng, &format!("intra.block{b}.reduce"), channels, mid, 1);
        nn::add_conv2d(store, rng, &format!("intra.block{b}.mid"), mid, mid, 3);
        nn::add_conv2d(store, rng, &format!("intra.block{b}.expand"), mid, channels, 1);
        nn::rescale(store, &format!("intra.block{b}.expand.weight"), 0.3);
    }
    nn::add_conv2d(store, rng, "intra.head", channels, 1, 1);
    nn::rescale(store, "intra.head.weight", 0.1);
    store.insert(
        "intra.head.bias",
        Tensor::new(&[1], vec![-((1.0 - INTEREST_PRIOR) / INTEREST_PRIOR).ln()]),
    );
}

/// Full-resolution interest logits `(H, W)` for both views, shared weights.
pub fn intra_decode<'g>(p: &Bound<'g>, fp: &FeaturePair<'g>, blocks: usize) -> (Var<'g>, Var<'g>) {
    let run = |f: Var<'g>| {
        let mut x = f;
        for b in 0..blocks {
            let h = p.conv2d(&format!("intra.block{b}.reduce"), x, 1, 0).relu();
            let h = p.conv2d(&format!("intra.block{b}.mid"), h, 1, 1).relu();
            let h = p.conv2d(&format!("intra.block{b}.expand"), h, 1, 0);
            x = x.add(h).relu();
        }
        let logits = p.conv2d("intra.head", x, 1, 0).upsample_bilinear(fp.stride);
        let s = logits.shape();
        logits.reshape(&[s[1], s[2]])
    };
    (run(fp.f_l), run(fp.f_r))
}

/// Adds cross-view decoder weights.
pub fn init_cross(store: &mut ParamStore, rng: &mut impl Rng, channels: usize, cfg: &DecoderConfig) {
    let c = channels;
    store.insert("cross.dustbin", Tensor::scalar(1.0));
    if cfg.cross_layers == 0 {
        store.insert("cross.scale", Tensor::scalar(10.0));
        return;
    }
    nn::add_linear(store, rng, "cross.pos.fc1", 3, cfg.pos_hidden);
    nn::add_linear(store, rng, "cross.pos.fc2", cfg.pos_hidden, c);
    nn::rescale(store, "cross.pos.fc2.weight", 0.1);
    for k in 0..cfg.cross_layers {
        for proj in ["q", "k", "v", "o"] {
            nn::add_linear(store, rng, &format!("cross.layer{k}.{proj}"), c, c);
        }
        nn::add_linear(store, rng, &format!("cross.layer{k}.mlp1"), 2 * c, 2 * c);
        nn::add_linear(store, rng, &format!("cross.layer{k}.mlp2"), 2 * c, c);
        nn::rescale(store, &format!("cross.layer{k}.mlp2.weight"), 0.1);
    }
    nn::add_linear(store, rng, "cross.final", c, c);
}

fn multi_head_attention<'g>(p: &Bound<'g>, layer: &str, x: Var<'g>, src: Var<'g>, heads: usize) -> Var<'g> {
    let q = p.linear(&format!("{layer}.q"), x);
    let k = p.linear(&format!("{layer}.k"), src);
    let v = p.linear(&format!("{layer}.v"), src);
    let c = q.shape()[1];
    let dh = c / heads;
    let parts: Vec<Var<'g>> = (0..heads)
        .map(|h| {
            let (a, b) = (h * dh, (h + 1) * dh);
            let att = q
                .slice_cols(a, b)
                .matmul(k.slice_cols(a, b).transpose())
                .scale(1.0 / (dh as f64).sqrt())
                .softmax_rows();
            att.matmul(v.slice_cols(a, b))
        })
        .collect();
    p.linear(&format!("{layer}.o"), Var::concat_cols(&parts))
}

fn attention_update<'g>(p: &Bound<'g>, layer: &str, x: Var<'g>, src: Var<'g>, heads: usize) -> Var<'g> {
    let msg = multi_head_attention(p, layer, x, src, heads);
    let h = p
        .linear(&format!("{layer}.mlp1"), Var::concat_cols(&[x, msg]))
        .relu();
    x.add(p.linear(&format!("{layer}.mlp2"), h))
}

fn positional_input<'g>(g: &'g Graph, points: &PointSet, dims: (usize, usize)) -> Var<'g> {
    let (h, w) = dims;
    let mut data = Vec::with_capacity(points.len() * 3);
    for ((x, y), s) in points.iter() {
        data.extend_from_slice(&[x / w as f64, y / h as f64, s]);
    }
    g.constant(Tensor::new(&[points.len(), 3], data))
}

/// Score matrix with dustbins, `(m+1, n+1)`, before normalization.
pub fn cross_scores<'g>(
    p: &Bound<'g>,
    cfg: &DecoderConfig,
    points: (&PointSet, &PointSet),
    desc: (&DescriptorSet<'g>, &DescriptorSet<'g>),
    image_dims: (usize, usize),
) -> Result<Var<'g>> {
    let (p_l, p_r) = points;
    let (d_l, d_r) = desc;
    let (m, n) = (p_l.len(), p_r.len());
    if m == 0 || n == 0 {
        return Err(Error::Degenerate(format!("cross decoder needs points on both sides (m={m}, n={n})")));
    }
    if d_l.len() != m || d_r.len() != n {
        return Err(Error::Contract(format!(
            "descriptor counts ({}, {}) do not match point counts ({m}, {n})",
            d_l.len(),
            d_r.len()
        )));
    }
    let alpha = p.var("cross.dustbin");
    if cfg.cross_layers == 0 {
        let cos = d_l.vectors.matmul(d_r.vectors.transpose());
        return Ok(cos.mul_scalar(p.var("cross.scale")).append_dustbins(alpha));
    }
    let g = p.graph();
    let encode = |pts: &PointSet| {
        let h = p.linear("cross.pos.fc1", positional_input(g, pts, image_dims)).relu();
        p.linear("cross.pos.fc2", h)
    };
    let mut a = d_l.vectors.add(encode(p_l));
    let mut b = d_r.vectors.add(encode(p_r));
    for k in 0..cfg.cross_layers {
        let layer = format!("cross.layer{k}");
        let cross = k % 2 == 1;
        let (src_a, src_b) = if cross { (b, a) } else { (a, b) };
        let na = attention_update(p, &layer, a, src_a, cfg.heads);
        let nb = attention_update(p, &layer, b, src_b, cfg.heads);
        a = na;
        b = nb;
    }
    let a = p.linear("cross.final", a);
    let b = p.linear("cross.final", b);
    let c = a.shape()[1];
    Ok(a.matmul(b.transpose())
        .scale(1.0 / (c as f64).sqrt())
        .append_dustbins(alpha))
}

/// Transport matrix `(m+1, n+1)` from the cross-view decoder.
pub fn cross_decode<'g>(
    p: &Bound<'g>,
    cfg: &DecoderConfig,
    points: (&PointSet, &PointSet),
    desc: (&DescriptorSet<'g>, &DescriptorSet<'g>),
    image_dims: (usize, usize),
) -> Result<Var<'g>> {
    Ok(sinkhorn_normalize(cross_scores(p, cfg, points, desc, image_dims)?, cfg.sinkhorn_iters))
}

/// Log-domain Sinkhorn on an `(m+1, n+1)` score matrix with row marginals
/// `(1, ..., 1, n)` and column marginals `(1, ..., 1, m)`.
///
/// Each iteration rescales rows and then columns. The result is the raw
/// transport matrix; its dustbin corner carries leftover mass. With
/// `iters = 0` it is `exp(scores)`. Requires `m, n >= 1`.
pub fn sinkhorn_normalize(scores: Var<'_>, iters: usize) -> Var<'_> {
    let shape = scores.shape();
    let (r, c) = (shape[0], shape[1]);
    assert!(r >= 2 && c >= 2, "sinkhorn needs at least one real row and column");
    let (m, n) = (r - 1, c - 1);
    let g = scores.graph();
    let mut log_mu = vec![0.0; r];
    log_mu[m] = (n as f64).ln();
    let mut log_nu = vec![0.0; c];
    log_nu[n] = (m as f64).ln();
    let log_mu = g.constant(Tensor::new(&[r], log_mu));
    let log_nu = g.constant(Tensor::new(&[c], log_nu));
    let mut u = g.constant(Tensor::zeros(&[r]));
    let mut v = g.constant(Tensor::zeros(&[c]));
    for _ in 0..iters {
        u = log_mu.sub(scores.add_row_vector(v).logsumexp_rows());
        v = log_nu.sub(scores.add_col_vector(u).logsumexp_cols());
    }
    scores.add_col_vector(u).add_row_vector(v).exp()
}

/// A partial assignment with dustbins; entries in `[0, 1]` and a zero corner.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    matrix: Tensor,
}

/// Slack allowed above 1 before an entry is rejected outright.
pub const ASSIGNMENT_TOLERANCE: f64 = 1e-6;

impl Assignment {
    /// Validates an `(m+1, n+1)` matrix; entries within tolerance of `[0, 1]`
    /// are clamped. The corner is zeroed.
    pub fn new(mut matrix: Tensor) -> Result<Self> {
        if matrix.ndim() != 2 || matrix.shape()[0] < 1 || matrix.shape()[1] < 1 {
            return Err(Error::Contract(format!(
                "assignment must be a non-empty matrix, got shape {:?}",
                matrix.shape()
            )));
        }
        for v in matrix.data_mut() {
            if !v.is_finite() || *v < -ASSIGNMENT_TOLERANCE || *v > 1.0 + ASSIGNMENT_TOLERANCE {
                return Err(Error::Contract(format!("assignment entry {v} outside [0, 1]")));
            }
            *v = v.clamp(0.0, 1.0);
        }
        let (r, c) = matrix.dims2();
        matrix.set2(r - 1, c - 1, 0.0);
        Ok(Self { matrix })
    }

    /// Builds from a Sinkhorn transport matrix, discarding the corner mass.
    pub fn from_transport(transport: &Tensor) -> Result<Self> {
        let mut t = transport.clone();
        let (r, c) = t.dims2();
        t.set2(r - 1, c - 1, 0.0);
        Self::new(t)
    }

    pub fn m(&self) -> usize {
        self.matrix.shape()[0] - 1
    }

    pub fn n(&self) -> usize {
        self.matrix.shape()[1] - 1
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn into_matrix(self) -> Tensor {
        self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.at2(i, j)
    }

    /// Largest deviation from 1 over real row sums and real column sums.
    pub fn marginal_error(&self) -> f64 {
        let (m, n) = (self.m(), self.n());
        let rows = (0..m).map(|i| (self.matrix.row(i).iter().sum::<f64>() - 1.0).abs());
        let cols = (0..n).map(|j| ((0..=m).map(|i| self.matrix.at2(i, j)).sum::<f64>() - 1.0).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::gradcheck::max_rel_error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// Plain alternating normalization in the probability domain.
    fn sinkhorn_oracle(scores: &Tensor, iters: usize) -> Tensor {
        let (r, c) = scores.dims2();
        let (m, n) = (r - 1, c - 1);
        let mu: Vec<f64> = (0..r).map(|i| if i == m { n as f64 } else { 1.0 }).collect();
        let nu: Vec<f64> = (0..c).map(|j| if j == n { m as f64 } else { 1.0 }).collect();
        let mut k = scores.map(f64::exp);
        for _ in 0..iters {
            for i in 0..r {
                let s: f64 = k.row(i).iter().sum();
                for j in 0..c {
                    k.set2(i, j, k.at2(i, j) * mu[i] / s);
                }
            }
            for j in 0..c {
                let s: f64 = (0..r).map(|i| k.at2(i, j)).sum();
                for i in 0..r {
                    k.set2(i, j, k.at2(i, j) * nu[j] / s);
                }
            }
        }
        k
    }

    fn run_sinkhorn(scores: &Tensor, iters: usize) -> Tensor {
        let g = Graph::new();
        sinkhorn_normalize(g.constant(scores.clone()), iters).value().as_ref().clone()
    }

    #[test]
    fn equal_scores_two_by_two_is_one_half() {
        let p = run_sinkhorn(&Tensor::zeros(&[2, 2]), 100);
        assert!(p.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn zero_iterations_is_exp() {
        let s = Tensor::new(&[2, 3], vec![0.1, -0.2, 0.3, 1.0, 0.0, -1.0]);
        assert_eq!(run_sinkhorn(&s, 0), s.map(f64::exp));
    }

    #[test]
    fn constant_shift_is_invisible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = rand_tensor(&mut rng, &[4, 5]);
        let a = run_sinkhorn(&s, 50);
        let b = run_sinkhorn(&s.map(|v| v + 7.5), 50);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn strong_match_takes_all_mass() {
        let s = Tensor::new(&[2, 2], vec![60.0, 0.0, 0.0, 0.0]);
        // A dominant score slows convergence, hence the long run.
        let a = Assignment::from_transport(&run_sinkhorn(&s, 5000)).unwrap();
        assert!((a.get(0, 0) - 1.0).abs() < 1e-3, "{a:?}");
        assert!(a.get(0, 1) < 1e-3 && a.get(1, 0) < 1e-3);
    }

    #[test]
    fn matches_probability_domain_oracle_and_marginals() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let m = rng.random_range(1..7);
            let n = rng.random_range(1..7);
            let s = Tensor::from_fn(&[m + 1, n + 1], |_| rng.random_range(-3.0..3.0));
            let got = run_sinkhorn(&s, 100);
            let want = sinkhorn_oracle(&s, 100);
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
            let asg = Assignment::from_transport(&got).unwrap();
            assert!(asg.marginal_error() < 1e-3);
        }
    }

    #[test]
    fn sinkhorn_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = rand_tensor(&mut rng, &[4, 3]);
        let w = rand_tensor(&mut rng, &[4, 3]);
        let err = max_rel_error(&[s], |g, v| sinkhorn_normalize(v[0], 20).mul(g.constant(w.clone())).sum());
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn assignment_rejects_out_of_range() {
        assert!(Assignment::new(Tensor::new(&[2, 2], vec![0.5, 1.5, 0.2, 0.0])).is_err());
        let a = Assignment::new(Tensor::new(&[2, 2], vec![1.0 + 1e-9, 0.0, 0.0, 0.7])).unwrap();
        assert_eq!(a.get(0, 0), 1.0);
        assert_eq!(a.get(1, 1), 0.0);
    }

    struct Setup {
        params: ParamStore,
        cfg: DecoderConfig,
    }

    fn setup(layers: usize, channels: usize, seed: u64) -> Setup {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = DecoderConfig {
            cross_layers: layers,
            heads: 2,
            ..Default::default()
        };
        let mut params = ParamStore::new();
        init_cross(&mut params, &mut rng, channels, &cfg);
        Setup { params, cfg }
    }

    fn random_points(rng: &mut ChaCha8Rng, k: usize) -> PointSet {
        let coords = (0..k)
            .map(|_| (rng.random_range(0.0..31.0), rng.random_range(0.0..31.0)))
            .collect();
        let scores = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        PointSet::new(coords, scores).unwrap()
    }

    fn unit_rows(rng: &mut ChaCha8Rng, k: usize, c: usize) -> Tensor {
        let mut t = rand_tensor(rng, &[k, c]);
        for i in 0..k {
            let n = t.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            for j in 0..c {
                t.set2(i, j, t.at2(i, j) / n);
            }
        }
        t
    }

    fn decode(s: &Setup, pl: &PointSet, dl: &Tensor, pr: &PointSet, dr: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let p = s.params.bind_frozen(&g);
        let dl = DescriptorSet {
            vectors: g.constant(dl.clone()),
        };
        let dr = DescriptorSet {
            vectors: g.constant(dr.clone()),
        };
        Ok(cross_decode(&p, &s.cfg, (pl, pr), (&dl, &dr), (32, 32))?
            .value()
            .as_ref()
            .clone())
    }

    #[test]
    fn empty_side_is_degenerate() {
        let s = setup(2, 8, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pl = random_points(&mut rng, 3);
        let dl = unit_rows(&mut rng, 3, 8);
        let empty = PointSet::from_coords(vec![]);
        let r = decode(&s, &pl, &dl, &empty, &Tensor::zeros(&[0, 8]));
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn decoder_output_satisfies_assignment_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for layers in [0, 2, 4] {
            let s = setup(layers, 8, 5 + layers as u64);
            for _ in 0..5 {
                let (m, n) = (rng.random_range(1..9), rng.random_range(1..9));
                let (pl, pr) = (random_points(&mut rng, m), random_points(&mut rng, n));
                let (dl, dr) = (unit_rows(&mut rng, m, 8), unit_rows(&mut rng, n, 8));
                let a = Assignment::from_transport(&decode(&s, &pl, &dl, &pr, &dr).unwrap()).unwrap();
                assert!(a.marginal_error() < 1e-3);
            }
        }
    }

    #[test]
    fn permuting_left_points_permutes_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = setup(4, 8, 6);
        let (m, n) = (5, 4);
        let (pl, pr) = (random_points(&mut rng, m), random_points(&mut rng, n));
        let (dl, dr) = (unit_rows(&mut rng, m, 8), unit_rows(&mut rng, n, 8));
        let perm = [3, 0, 4, 1, 2];
        let dl_perm = Tensor::from_fn(&[m, 8], |i| dl.at2(perm[i / 8], i % 8));
        let a = decode(&s, &pl, &dl, &pr, &dr).unwrap();
        let b = decode(&s, &pl.permuted(&perm), &dl_perm, &pr, &dr).unwrap();
        for (i, &pi) in perm.iter().enumerate() {
            for j in 0..=n {
                assert!((b.at2(i, j) - a.at2(pi, j)).abs() < 1e-9);
            }
        }
        for j in 0..n {
            assert!((b.at2(m, j) - a.at2(m, j)).abs() < 1e-9);
        }
    }

    #[test]
    fn attention_decoder_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = setup(2, 4, 7);
        let (pl, pr) = (random_points(&mut rng, 3), random_points(&mut rng, 2));
        let dl = rand_tensor(&mut rng, &[3, 4]);
        let dr = rand_tensor(&mut rng, &[2, 4]);
        let w = rand_tensor(&mut rng, &[4, 3]);
        let cfg = DecoderConfig {
            sinkhorn_iters: 10,
            ..s.cfg.clone()
        };
        let err = max_rel_error(&[dl, dr], |g, v| {
            let p = s.params.bind_frozen(g);
            let dl = DescriptorSet { vectors: v[0] };
            let dr = DescriptorSet { vectors: v[1] };
            cross_decode(&p, &cfg, (&pl, &pr), (&dl, &dr), (32, 32))
                .unwrap()
                .mul(g.constant(w.clone()))
                .sum()
        });
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn intra_decoder_is_shared_and_full_resolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut params = ParamStore::new();
        init_intra(&mut params, &mut rng, 8, 2);
        let f = rand_tensor(&mut rng, &[8, 3, 5]);
        let g = Graph::new();
        let p = params.bind_frozen(&g);
        let fp = FeaturePair {
            f_l: g.constant(f.clone()),
            f_r: g.constant(f),
            stride: 4,
        };
        let (l, r) = intra_decode(&p, &fp, 2);
        assert_eq!(l.shape(), vec![12, 20]);
        assert_eq!(l.value().data(), r.value().data());
    }
}
