//! Compact stereo network: shared encoder, group-wise correlation volume,
//! 3D aggregation and soft-argmin regression.
//!
//! Feature cell `c` covers input pixels `[c*s, (c+1)*s)` and its center sits
//! at pixel `c*s + (s-1)/2`. The stem uses 4x4 stride-2 convolutions, which
//! keeps that alignment exact through every downsampling step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::interest::PointSet;
use crate::nn::{self, Bound, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    pub channels: usize,
    /// Residual blocks after the stem.
    pub blocks: usize,
    /// Output stride, a power of two.
    pub stride: usize,
    pub max_disparity: usize,
    pub groups: usize,
    /// Hidden width of the 3D aggregation stack.
    pub agg_channels: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            channels: 64,
            blocks: 6,
            stride: 4,
            max_disparity: 64,
            groups: 8,
            agg_channels: 8,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.stride < 2 || !self.stride.is_power_of_two() {
            return bad(format!("stride {} must be a power of two >= 2", self.stride));
        }
        if self.groups == 0 || self.channels == 0 || self.channels % self.groups != 0 {
            return bad(format!(
                "channels {} must be a positive multiple of groups {}",
                self.channels, self.groups
            ));
        }
        if self.channels % 2 != 0 {
            return bad("channels must be even".into());
        }
        if self.max_disparity < self.stride || self.max_disparity % self.stride != 0 {
            return bad(format!(
                "max_disparity {} must be a positive multiple of the stride {}",
                self.max_disparity, self.stride
            ));
        }
        if self.agg_channels == 0 {
            return bad("agg_channels must be positive".into());
        }
        Ok(())
    }

    /// Disparity bins at feature resolution.
    pub fn disparity_bins(&self) -> usize {
        self.max_disparity / self.stride
    }

    fn stem_layers(&self) -> usize {
        self.stride.trailing_zeros() as usize
    }
}

/// Left and right feature maps `(C, H/s, W/s)` from the shared encoder.
#[derive(Clone, Copy)]
pub struct FeaturePair<'g> {
    pub f_l: Var<'g>,
    pub f_r: Var<'g>,
    pub stride: usize,
}

impl<'g> FeaturePair<'g> {
    pub fn channels(&self) -> usize {
        self.f_l.shape()[0]
    }

    /// Input image size `(H, W)`.
    pub fn image_dims(&self) -> (usize, usize) {
        let s = self.f_l.shape();
        (s[1] * self.stride, s[2] * self.stride)
    }

    pub fn view(&self, view: View) -> Var<'g> {
        match view {
            View::Left => self.f_l,
            View::Right => self.f_r,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum View {
    Left,
    Right,
}

/// Full-resolution disparity plus the auxiliary head's estimate, both `(H, W)`.
#[derive(Clone, Copy)]
pub struct DisparityPrediction<'g> {
    pub disp: Var<'g>,
    pub disp_aux: Var<'g>,
}

/// Unit-norm descriptors `(m, C)` in point-set order.
#[derive(Clone, Copy)]
pub struct DescriptorSet<'g> {
    pub vectors: Var<'g>,
}

impl DescriptorSet<'_> {
    pub fn len(&self) -> usize {
        self.vectors.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Scale applied to `[0, 1]` intensities before the first convolution.
const INPUT_GAIN: f64 = 4.0;

const DESCRIPTOR_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct StereoNet {
    cfg: BackboneConfig,
}

impl StereoNet {
    pub fn new(cfg: BackboneConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.cfg
    }

    /// Seeded initial weights, all under the `backbone.` and `agg.` prefixes.
    pub fn init_params(&self, rng: &mut impl Rng) -> ParamStore {
        let c = self.cfg.channels;
        let mut p = ParamStore::new();
        let n_stem = self.cfg.stem_layers();
        let mut cin = 1;
        for i in 0..n_stem {
            let cout = if i + 1 == n_stem { c } else { c / 2 };
            nn::add_conv2d(&mut p, rng, &format!("backbone.stem{i}"), cin, cout, 4);
            cin = cout;
        }
        for b in 0..self.cfg.blocks {
            nn::add_conv2d(&mut p, rng, &format!("backbone.block{b}.conv1"), c, c, 3);
            nn::add_conv2d(&mut p, rng, &format!("backbone.block{b}.conv2"), c, c, 3);
            nn::rescale(&mut p, &format!("backbone.block{b}.conv2.weight"), 0.3);
        }
        nn::add_conv2d(&mut p, rng, "backbone.head", c, c, 3);

        let (g, a) = (self.cfg.groups, self.cfg.agg_channels);
        nn::add_conv3d(&mut p, rng, "agg.conv1", g, a, 3);
        nn::add_conv3d(&mut p, rng, "agg.conv2", a, a, 3);
        nn::add_conv3d(&mut p, rng, "agg.conv3", a, 1, 3);
        nn::add_conv3d(&mut p, rng, "agg.aux", a, 1, 3);
        nn::rescale(&mut p, "agg.conv3.weight", 0.1);
        nn::rescale(&mut p, "agg.aux.weight", 0.1);
        p.insert("agg.gain", Tensor::scalar(5.0));
        p
    }

    /// Encodes one `(1, H, W)` image into `(C, H/s, W/s)` features.
    pub fn encode<'g>(&self, p: &Bound<'g>, image: Var<'g>) -> Var<'g> {
        let mut x = image;
        for i in 0..self.cfg.stem_layers() {
            x = p.conv2d(&format!("backbone.stem{i}"), x, 2, 1).relu();
        }
        for b in 0..self.cfg.blocks {
            let h = p.conv2d(&format!("backbone.block{b}.conv1"), x, 1, 1).relu();
            let h = p.conv2d(&format!("backbone.block{b}.conv2"), h, 1, 1);
            x = x.add(h).relu();
        }
        p.conv2d("backbone.head", x, 1, 1)
    }

    pub fn extract_features<'g>(&self, p: &Bound<'g>, left: &Grid<f64>, right: &Grid<f64>) -> Result<FeaturePair<'g>> {
        self.check_image(left)?;
        if !left.same_dims(right) {
            return Err(Error::Contract(format!(
                "left {:?} and right {:?} images differ in size",
                left.dims(),
                right.dims()
            )));
        }
        let g = p.graph();
        let prep = |img: &Grid<f64>| g.constant(img.to_tensor().map(|v| (v - 0.5) * INPUT_GAIN));
        Ok(FeaturePair {
            f_l: self.encode(p, prep(left)),
            f_r: self.encode(p, prep(right)),
            stride: self.cfg.stride,
        })
    }

    fn check_image(&self, img: &Grid<f64>) -> Result<()> {
        let (h, w) = img.dims();
        let s = self.cfg.stride;
        if h == 0 || w == 0 || h % s != 0 || w % s != 0 {
            return Err(Error::Contract(format!(
                "image {w}x{h} must be non-empty and divisible by the stride {s}"
            )));
        }
        if self.cfg.max_disparity >= w {
            return Err(Error::Contract(format!(
                "max_disparity {} must be below the image width {w}",
                self.cfg.max_disparity
            )));
        }
        Ok(())
    }

    /// Aggregated cost logits `(D/s, H/s, W/s)` and the auxiliary logits.
    pub fn aggregate<'g>(&self, p: &Bound<'g>, fp: &FeaturePair<'g>) -> (Var<'g>, Var<'g>) {
        let nd = self.cfg.disparity_bins();
        let grouped = fp.f_l.group_correlation(fp.f_r, self.cfg.groups, nd);
        let base = grouped.mean_axis0().mul_scalar(p.var("agg.gain"));
        let shape = base.shape();
        let h1 = p.conv3d("agg.conv1", grouped, 1).relu();
        let aux = p.conv3d("agg.aux", h1, 1).reshape(&shape).add(base);
        let h2 = p.conv3d("agg.conv2", h1, 1).relu();
        let main = p.conv3d("agg.conv3", h2, 1).reshape(&shape).add(base);
        (main, aux)
    }

    /// Features and disparity for one stereo pair.
    pub fn forward<'g>(
        &self,
        p: &Bound<'g>,
        left: &Grid<f64>,
        right: &Grid<f64>,
    ) -> Result<(FeaturePair<'g>, DisparityPrediction<'g>)> {
        let fp = self.extract_features(p, left, right)?;
        let (main, aux) = self.aggregate(p, &fp);
        let s = self.cfg.stride;
        Ok((
            fp,
            DisparityPrediction {
                disp: regress_disparity(main, s),
                disp_aux: regress_disparity(aux, s),
            },
        ))
    }

    /// Disparity map of a pair with frozen weights; no gradient tape is kept.
    pub fn predict(&self, params: &ParamStore, left: &Grid<f64>, right: &Grid<f64>) -> Result<Grid<f64>> {
        let g = Graph::new();
        let p = params.bind_frozen(&g);
        let (_, pred) = self.forward(&p, left, right)?;
        let (h, w) = left.dims();
        Ok(Grid::from_vec(h, w, pred.disp.value().data().to_vec()))
    }
}

/// Mean over `groups` of the per-group cosine correlation, `(D/s, H/s, W/s)`.
pub fn build_cost_volume<'g>(fp: &FeaturePair<'g>, max_disparity: usize, groups: usize) -> Var<'g> {
    fp.f_l
        .group_correlation(fp.f_r, groups, max_disparity / fp.stride)
        .mean_axis0()
}

/// Soft-argmin over bins, scaled to pixels and upsampled to `(H, W)`.
pub fn regress_disparity<'g>(volume: Var<'g>, stride: usize) -> Var<'g> {
    let shape = volume.shape();
    let (h, w) = (shape[1], shape[2]);
    volume
        .soft_argmin(stride as f64)
        .reshape(&[1, h, w])
        .upsample_bilinear(stride)
        .reshape(&[h * stride, w * stride])
}

/// Image pixel `(x, y)` in continuous feature-cell coordinates.
pub fn pixel_to_cell(x: f64, y: f64, stride: usize) -> (f64, f64) {
    let s = stride as f64;
    let off = (s - 1.0) / 2.0;
    ((x - off) / s, (y - off) / s)
}

/// Bilinear descriptors at `points` from one view, L2-normalized per point.
pub fn sample_descriptors<'g>(fp: &FeaturePair<'g>, points: &PointSet, view: View) -> Result<DescriptorSet<'g>> {
    let (h, w) = fp.image_dims();
    points.check_bounds(h, w)?;
    let cells: Vec<(f64, f64)> = points
        .coords()
        .iter()
        .map(|&(x, y)| pixel_to_cell(x, y, fp.stride))
        .collect();
    let raw = fp.view(view).sample_bilinear(&cells);
    Ok(DescriptorSet {
        vectors: raw.l2_normalize_rows(DESCRIPTOR_EPS),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::gradcheck::max_rel_error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> BackboneConfig {
        BackboneConfig {
            channels: 8,
            blocks: 1,
            stride: 4,
            max_disparity: 16,
            groups: 2,
            agg_channels: 2,
        }
    }

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Grid<f64> {
        Grid::from_fn(h, w, |_, _| rng.random_range(0.0..1.0))
    }

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identical_inputs_give_identical_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = StereoNet::new(small_cfg()).unwrap();
        let params = net.init_params(&mut rng);
        let img = random_image(&mut rng, 32, 32);
        let g = Graph::new();
        let p = params.bind_frozen(&g);
        let fp = net.extract_features(&p, &img, &img).unwrap();
        assert_eq!(fp.f_l.value().data(), fp.f_r.value().data());
    }

    #[test]
    fn swapping_inputs_swaps_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = StereoNet::new(small_cfg()).unwrap();
        let params = net.init_params(&mut rng);
        let (a, b) = (random_image(&mut rng, 32, 32), random_image(&mut rng, 32, 32));
        let g = Graph::new();
        let p = params.bind_frozen(&g);
        let ab = net.extract_features(&p, &a, &b).unwrap();
        let ba = net.extract_features(&p, &b, &a).unwrap();
        assert_eq!(ab.f_l.value().data(), ba.f_r.value().data());
        assert_eq!(ab.f_r.value().data(), ba.f_l.value().data());
    }

    #[test]
    fn shifting_input_by_stride_shifts_features_by_one_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = StereoNet::new(small_cfg()).unwrap();
        let params = net.init_params(&mut rng);
        let (h, w) = (32, 96);
        let img = random_image(&mut rng, h, w);
        let shifted = Grid::from_fn(h, w, |x, y| if x >= 4 { *img.get(x - 4, y) } else { 0.3 });
        let g = Graph::new();
        let p = params.bind_frozen(&g);
        let fp = net.extract_features(&p, &img, &shifted).unwrap();
        let (a, b) = (fp.f_l.value(), fp.f_r.value());
        let (c, fh, fw) = a.dims3();
        let margin = 6;
        for ch in 0..c {
            for y in margin..fh - margin {
                for x in margin..fw - margin {
                    let orig = a.data()[(ch * fh + y) * fw + x];
                    let moved = b.data()[(ch * fh + y) * fw + x + 1];
                    assert!((orig - moved).abs() < 1e-5, "ch {ch} cell ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn zero_image_gives_finite_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = StereoNet::new(small_cfg()).unwrap();
        let params = net.init_params(&mut rng);
        let zero = Grid::filled(32, 32, 0.0);
        let d = net.predict(&params, &zero, &zero).unwrap();
        assert!(d.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn prediction_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = small_cfg();
        let net = StereoNet::new(cfg.clone()).unwrap();
        let params = net.init_params(&mut rng);
        for _ in 0..3 {
            let (a, b) = (random_image(&mut rng, 32, 48), random_image(&mut rng, 32, 48));
            let d = net.predict(&params, &a, &b).unwrap();
            assert!(d.data().iter().all(|&v| (0.0..=cfg.max_disparity as f64).contains(&v)));
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        let net = StereoNet::new(small_cfg()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = net.init_params(&mut rng);
        let odd = Grid::filled(30, 32, 0.0);
        assert!(matches!(net.predict(&params, &odd, &odd), Err(Error::Contract(_))));
        let bad = BackboneConfig {
            stride: 3,
            ..small_cfg()
        };
        assert!(StereoNet::new(bad).is_err());
    }

    /// Loop-based cosine correlation averaged over groups.
    fn correlation_oracle(l: &Tensor, r: &Tensor, groups: usize, nd: usize) -> Tensor {
        let (c, h, w) = l.dims3();
        let cg = c / groups;
        let mut out = Tensor::zeros(&[nd, h, w]);
        for d in 0..nd {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for gi in 0..groups {
                        if x < d {
                            acc += -1.0;
                            continue;
                        }
                        let (mut dot, mut nl, mut nr) = (0.0, 0.0, 0.0);
                        for ch in gi * cg..(gi + 1) * cg {
                            let a = l.at3(ch, y, x);
                            let b = r.at3(ch, y, x - d);
                            dot += a * b;
                            nl += a * a;
                            nr += b * b;
                        }
                        acc += dot / ((nl + 1e-6).sqrt() * (nr + 1e-6).sqrt()).max(1e-300);
                    }
                    out.data_mut()[(d * h + y) * w + x] = acc / groups as f64;
                }
            }
        }
        out
    }

    #[test]
    fn shifted_features_peak_at_the_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (c, h, w, k) = (8, 5, 16, 3);
        let l = rand_tensor(&mut rng, &[c, h, w]);
        let r = Tensor::from_fn(&[c, h, w], |i| {
            let (ch, y, x) = (i / (h * w), (i / w) % h, i % w);
            if x + k < w {
                l.at3(ch, y, x + k)
            } else {
                0.5
            }
        });
        let g = Graph::new();
        let fp = FeaturePair {
            f_l: g.constant(l.clone()),
            f_r: g.constant(r.clone()),
            stride: 4,
        };
        let vol = build_cost_volume(&fp, 24, 2).value();
        let oracle = correlation_oracle(&l, &r, 2, 6);
        for (a, b) in vol.data().iter().zip(oracle.data()) {
            assert!((a - b).abs() < 1e-9);
        }
        for y in 0..h {
            for x in k..w - k {
                let best = (0..6)
                    .max_by(|&a, &b| vol.at3(a, y, x).total_cmp(&vol.at3(b, y, x)))
                    .unwrap();
                assert_eq!(best, k, "cell ({x},{y})");
            }
        }
    }

    #[test]
    fn independent_features_correlate_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut total = 0.0;
        let trials = 1000;
        for _ in 0..trials {
            let g = Graph::new();
            let fp = FeaturePair {
                f_l: g.constant(rand_tensor(&mut rng, &[16, 1, 1])),
                f_r: g.constant(rand_tensor(&mut rng, &[16, 1, 1])),
                stride: 4,
            };
            total += build_cost_volume(&fp, 4, 2).value().data()[0];
        }
        assert!((total / trials as f64).abs() < 0.05);
    }

    #[test]
    fn one_hot_volume_regresses_to_bin_times_stride() {
        let g = Graph::new();
        let (nd, h, w, k) = (8, 3, 4, 5);
        let vol = Tensor::from_fn(&[nd, h, w], |i| if i / (h * w) == k { 1e3 } else { 0.0 });
        let d = regress_disparity(g.constant(vol), 4).value();
        assert_eq!(d.shape(), &[12, 16]);
        assert!(d.data().iter().all(|&v| (v - 20.0).abs() < 1e-9));
    }

    #[test]
    fn uniform_volume_regresses_to_midpoint() {
        let g = Graph::new();
        let d = regress_disparity(g.constant(Tensor::zeros(&[16, 2, 2])), 4).value();
        let want = 4.0 * (64.0 / 4.0 - 1.0) / 2.0;
        assert!(d.data().iter().all(|&v| (v - want).abs() < 1e-9));
    }

    #[test]
    fn regression_matches_explicit_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (nd, h, w, s) = (6, 3, 3, 2);
        for _ in 0..20 {
            let vol = Tensor::from_fn(&[nd, h, w], |_| rng.random_range(-3.0..3.0));
            let g = Graph::new();
            let got = regress_disparity(g.constant(vol.clone()), s).value();
            let low: Vec<f64> = (0..h * w)
                .map(|i| {
                    let z: Vec<f64> = (0..nd).map(|k| vol.data()[k * h * w + i].exp()).collect();
                    let total: f64 = z.iter().sum();
                    z.iter().enumerate().map(|(k, e)| e / total * (k * s) as f64).sum()
                })
                .collect();
            for oy in 0..h * s {
                for ox in 0..w * s {
                    let sy = ((oy as f64 + 0.5) / s as f64 - 0.5).clamp(0.0, (h - 1) as f64);
                    let sx = ((ox as f64 + 0.5) / s as f64 - 0.5).clamp(0.0, (w - 1) as f64);
                    let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                    let (ty, tx) = (sy - y0 as f64, sx - x0 as f64);
                    let want = (1.0 - ty) * ((1.0 - tx) * low[y0 * w + x0] + tx * low[y0 * w + x1])
                        + ty * ((1.0 - tx) * low[y1 * w + x0] + tx * low[y1 * w + x1]);
                    let v = got.data()[oy * w * s + ox];
                    assert!((v - want).abs() <= 1e-6 * want.abs().max(1e-12), "{v} vs {want}");
                }
            }
        }
    }

    fn fp_from<'g>(g: &'g Graph, l: &Tensor, r: &Tensor) -> FeaturePair<'g> {
        FeaturePair {
            f_l: g.constant(l.clone()),
            f_r: g.constant(r.clone()),
            stride: 4,
        }
    }

    fn normalized(v: &[f64]) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn descriptor_at_cell_center_is_that_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let f = rand_tensor(&mut rng, &[6, 4, 5]);
        let g = Graph::new();
        let fp = fp_from(&g, &f, &f);
        // Cell (2, 1) is centered at pixel (9.5, 5.5).
        let pts = PointSet::from_coords(vec![(9.5, 5.5)]);
        let d = sample_descriptors(&fp, &pts, View::Left).unwrap().vectors.value();
        let cell: Vec<f64> = (0..6).map(|c| f.at3(c, 1, 2)).collect();
        for (a, b) in d.data().iter().zip(normalized(&cell)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn descriptor_midway_is_normalized_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = rand_tensor(&mut rng, &[6, 4, 5]);
        let g = Graph::new();
        let fp = fp_from(&g, &f, &f);
        let pts = PointSet::from_coords(vec![(7.5, 5.5)]);
        let d = sample_descriptors(&fp, &pts, View::Right).unwrap().vectors.value();
        let mid: Vec<f64> = (0..6).map(|c| 0.5 * (f.at3(c, 1, 1) + f.at3(c, 1, 2))).collect();
        for (a, b) in d.data().iter().zip(normalized(&mid)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn descriptors_match_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (c, h, w) = (5, 6, 7);
        let f = rand_tensor(&mut rng, &[c, h, w]);
        let pts: Vec<(f64, f64)> = (0..100)
            .map(|_| (rng.random_range(0.0..(w * 4 - 1) as f64), rng.random_range(0.0..(h * 4 - 1) as f64)))
            .collect();
        let g = Graph::new();
        let fp = fp_from(&g, &f, &f);
        let d = sample_descriptors(&fp, &PointSet::from_coords(pts.clone()), View::Left)
            .unwrap()
            .vectors
            .value();
        for (i, &(x, y)) in pts.iter().enumerate() {
            let u = ((x - 1.5) / 4.0).clamp(0.0, (w - 1) as f64);
            let v = ((y - 1.5) / 4.0).clamp(0.0, (h - 1) as f64);
            let (x0, y0) = (u.floor() as usize, v.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (tx, ty) = (u - x0 as f64, v - y0 as f64);
            let raw: Vec<f64> = (0..c)
                .map(|ch| {
                    (1.0 - ty) * ((1.0 - tx) * f.at3(ch, y0, x0) + tx * f.at3(ch, y0, x1))
                        + ty * ((1.0 - tx) * f.at3(ch, y1, x0) + tx * f.at3(ch, y1, x1))
                })
                .collect();
            let want = normalized(&raw);
            let norm: f64 = d.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-5);
            for (a, b) in d.row(i).iter().zip(want) {
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn out_of_bounds_points_are_rejected() {
        let g = Graph::new();
        let f = Tensor::full(&[2, 2, 2], 1.0);
        let fp = fp_from(&g, &f, &f);
        let pts = PointSet::from_coords(vec![(8.0, 1.0)]);
        assert!(matches!(sample_descriptors(&fp, &pts, View::Left), Err(Error::Contract(_))));
    }

    #[test]
    fn regression_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let vol = rand_tensor(&mut rng, &[4, 2, 2]);
        let wts = rand_tensor(&mut rng, &[8, 8]);
        let err = max_rel_error(&[vol], |g, v| regress_disparity(v[0], 4).mul(g.constant(wts.clone())).sum());
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn descriptor_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let f = rand_tensor(&mut rng, &[4, 2, 2]);
        let wts = rand_tensor(&mut rng, &[3, 4]);
        let pts = PointSet::from_coords(vec![(1.0, 2.0), (4.2, 6.7), (3.3, 0.4)]);
        let err = max_rel_error(&[f], |g, v| {
            let fp = FeaturePair {
                f_l: v[0],
                f_r: v[0],
                stride: 4,
            };
            sample_descriptors(&fp, &pts, View::Left)
                .unwrap()
                .vectors
                .mul(g.constant(wts.clone()))
                .sum()
        });
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn network_gradient_matches_finite_differences() {
        let cfg = BackboneConfig {
            channels: 2,
            blocks: 1,
            stride: 2,
            max_disparity: 4,
            groups: 1,
            agg_channels: 1,
        };
        let net = StereoNet::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut params = net.init_params(&mut rng);
        // Nonzero biases keep pre-activations off the ReLU kink.
        let biases: Vec<String> = params.iter().map(|(k, _)| k.clone()).filter(|k| k.ends_with(".bias")).collect();
        for name in biases {
            for v in params.get_mut(&name).unwrap().data_mut() {
                *v = rng.random_range(-0.3..0.3);
            }
        }
        let (a, b) = (random_image(&mut rng, 8, 8), random_image(&mut rng, 8, 8));
        let names: Vec<String> = params.iter().map(|(k, _)| k.clone()).collect();
        let inputs: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
        let err = max_rel_error(&inputs, |g, v| {
            let p = Bound::from_vars(g, names.iter().cloned().zip(v.iter().copied()).collect());
            let (_, pred) = net.forward(&p, &a, &b).unwrap();
            pred.disp.mean().add(pred.disp_aux.mean())
        });
        assert!(err < 1e-4, "{err}");
    }
}
