//! Spatial operations: convolutions, correlation volumes, soft-argmin and
//! bilinear resampling. Feature maps are `(C, H, W)`, volumes `(C, D, H, W)`.

use super::Var;
use crate::tensor::Tensor;

/// Output positions `o` for which `o * stride + offset - pad` lands inside `0..n_in`.
fn valid_range(offset: usize, stride: usize, pad: usize, n_in: usize, n_out: usize) -> (usize, usize) {
    let lo = if pad > offset {
        (pad - offset).div_ceil(stride)
    } else {
        0
    };
    // o * stride + offset - pad <= n_in - 1
    let limit = n_in + pad;
    let hi = if limit > offset {
        ((limit - offset - 1) / stride + 1).min(n_out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

fn out_size(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    assert!(n + 2 * pad >= k, "kernel larger than padded input");
    (n + 2 * pad - k) / stride + 1
}

impl<'g> Var<'g> {
    /// 2-D convolution of a `(Ci, H, W)` map with `(Co, Ci, k, k)` weights.
    pub fn conv2d(self, weight: Var<'g>, bias: Var<'g>, stride: usize, pad: usize) -> Var<'g> {
        let x = self.value();
        let w = weight.value();
        let b = bias.value();
        let (ci, h, wd) = x.dims3();
        let (co, ci2, k, k2) = w.dims4();
        assert_eq!(ci, ci2, "conv2d channel mismatch");
        assert_eq!(k, k2);
        assert_eq!(b.len(), co);
        let ho = out_size(h, k, stride, pad);
        let wo = out_size(wd, k, stride, pad);
        let mut out = vec![0.0; co * ho * wo];
        for o in 0..co {
            let plane = &mut out[o * ho * wo..(o + 1) * ho * wo];
            plane.fill(b.data()[o]);
            for c in 0..ci {
                let xin = &x.data()[c * h * wd..(c + 1) * h * wd];
                for ky in 0..k {
                    let (oy0, oy1) = valid_range(ky, stride, pad, h, ho);
                    for kx in 0..k {
                        let wv = w.data()[((o * ci + c) * k + ky) * k + kx];
                        let (ox0, ox1) = valid_range(kx, stride, pad, wd, wo);
                        for oy in oy0..oy1 {
                            let iy = oy * stride + ky - pad;
                            let orow = &mut plane[oy * wo..(oy + 1) * wo];
                            let irow = &xin[iy * wd..(iy + 1) * wd];
                            for ox in ox0..ox1 {
                                orow[ox] += wv * irow[ox * stride + kx - pad];
                            }
                        }
                    }
                }
            }
        }
        self.graph().op(
            Tensor::new(&[co, ho, wo], out),
            &[self, weight, bias],
            Box::new(move |g, p, _, need| {
                let x = &p[0];
                let w = &p[1];
                let mut dx = need[0].then(|| vec![0.0; ci * h * wd]);
                let mut dw = need[1].then(|| vec![0.0; co * ci * k * k]);
                for o in 0..co {
                    let gp = &g.data()[o * ho * wo..(o + 1) * ho * wo];
                    for c in 0..ci {
                        let xin = &x.data()[c * h * wd..(c + 1) * h * wd];
                        for ky in 0..k {
                            let (oy0, oy1) = valid_range(ky, stride, pad, h, ho);
                            for kx in 0..k {
                                let widx = ((o * ci + c) * k + ky) * k + kx;
                                let wv = w.data()[widx];
                                let (ox0, ox1) = valid_range(kx, stride, pad, wd, wo);
                                let mut acc = 0.0;
                                for oy in oy0..oy1 {
                                    let iy = oy * stride + ky - pad;
                                    let grow = &gp[oy * wo..(oy + 1) * wo];
                                    if let Some(dx) = dx.as_mut() {
                                        let drow = &mut dx[c * h * wd + iy * wd..c * h * wd + (iy + 1) * wd];
                                        for ox in ox0..ox1 {
                                            drow[ox * stride + kx - pad] += wv * grow[ox];
                                        }
                                    }
                                    let irow = &xin[iy * wd..(iy + 1) * wd];
                                    for ox in ox0..ox1 {
                                        acc += grow[ox] * irow[ox * stride + kx - pad];
                                    }
                                }
                                if let Some(dw) = dw.as_mut() {
                                    dw[widx] += acc;
                                }
                            }
                        }
                    }
                }
                let db = need[2].then(|| {
                    let s = (0..co)
                        .map(|o| g.data()[o * ho * wo..(o + 1) * ho * wo].iter().sum())
                        .collect();
                    Tensor::new(&[co], s)
                });
                vec![
                    dx.map(|d| Tensor::new(&[ci, h, wd], d)),
                    dw.map(|d| Tensor::new(&[co, ci, k, k], d)),
                    db,
                ]
            }),
        )
    }

    /// Stride-1 3-D convolution of a `(Ci, D, H, W)` volume with
    /// `(Co, Ci, k, k, k)` weights and symmetric zero padding.
    pub fn conv3d(self, weight: Var<'g>, bias: Var<'g>, pad: usize) -> Var<'g> {
        let x = self.value();
        let w = weight.value();
        let b = bias.value();
        let (ci, d, h, wd) = x.dims4();
        let ws = w.shape();
        assert_eq!(ws.len(), 5, "conv3d weight must be 5-D");
        let (co, k) = (ws[0], ws[2]);
        assert_eq!(ws[1], ci, "conv3d channel mismatch");
        assert_eq!(b.len(), co);
        let dout = out_size(d, k, 1, pad);
        let ho = out_size(h, k, 1, pad);
        let wo = out_size(wd, k, 1, pad);
        let in_vol = d * h * wd;
        let out_vol = dout * ho * wo;
        let widx = move |o: usize, c: usize, kz: usize, ky: usize, kx: usize| {
            (((o * ci + c) * k + kz) * k + ky) * k + kx
        };

        let mut out = vec![0.0; co * out_vol];
        for o in 0..co {
            let vol = &mut out[o * out_vol..(o + 1) * out_vol];
            vol.fill(b.data()[o]);
            for c in 0..ci {
                let xin = &x.data()[c * in_vol..(c + 1) * in_vol];
                for kz in 0..k {
                    let (z0, z1) = valid_range(kz, 1, pad, d, dout);
                    for ky in 0..k {
                        let (y0, y1) = valid_range(ky, 1, pad, h, ho);
                        for kx in 0..k {
                            let (x0, x1) = valid_range(kx, 1, pad, wd, wo);
                            let wv = w.data()[widx(o, c, kz, ky, kx)];
                            for oz in z0..z1 {
                                let iz = oz + kz - pad;
                                for oy in y0..y1 {
                                    let iy = oy + ky - pad;
                                    let orow = &mut vol[(oz * ho + oy) * wo..(oz * ho + oy + 1) * wo];
                                    let irow = &xin[(iz * h + iy) * wd..(iz * h + iy + 1) * wd];
                                    for ox in x0..x1 {
                                        orow[ox] += wv * irow[ox + kx - pad];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        self.graph().op(
            Tensor::new(&[co, dout, ho, wo], out),
            &[self, weight, bias],
            Box::new(move |g, p, _, need| {
                let x = &p[0];
                let w = &p[1];
                let mut dx = need[0].then(|| vec![0.0; ci * in_vol]);
                let mut dw = need[1].then(|| vec![0.0; w.len()]);
                for o in 0..co {
                    let gv = &g.data()[o * out_vol..(o + 1) * out_vol];
                    for c in 0..ci {
                        let xin = &x.data()[c * in_vol..(c + 1) * in_vol];
                        for kz in 0..k {
                            let (z0, z1) = valid_range(kz, 1, pad, d, dout);
                            for ky in 0..k {
                                let (y0, y1) = valid_range(ky, 1, pad, h, ho);
                                for kx in 0..k {
                                    let (x0, x1) = valid_range(kx, 1, pad, wd, wo);
                                    let wi = widx(o, c, kz, ky, kx);
                                    let wv = w.data()[wi];
                                    let mut acc = 0.0;
                                    for oz in z0..z1 {
                                        let iz = oz + kz - pad;
                                        for oy in y0..y1 {
                                            let iy = oy + ky - pad;
                                            let grow = &gv[(oz * ho + oy) * wo..(oz * ho + oy + 1) * wo];
                                            let ibase = c * in_vol + (iz * h + iy) * wd;
                                            if let Some(dx) = dx.as_mut() {
                                                let drow = &mut dx[ibase..ibase + wd];
                                                for ox in x0..x1 {
                                                    drow[ox + kx - pad] += wv * grow[ox];
                                                }
                                            }
                                            let irow = &xin[(iz * h + iy) * wd..(iz * h + iy + 1) * wd];
                                            for ox in x0..x1 {
                                                acc += grow[ox] * irow[ox + kx - pad];
                                            }
                                        }
                                    }
                                    if let Some(dw) = dw.as_mut() {
                                        dw[wi] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
                let db = need[2].then(|| {
                    let s = (0..co)
                        .map(|o| g.data()[o * out_vol..(o + 1) * out_vol].iter().sum())
                        .collect();
                    Tensor::new(&[co], s)
                });
                vec![
                    dx.map(|v| Tensor::new(&[ci, d, h, wd], v)),
                    dw.map(|v| Tensor::new(w.shape(), v)),
                    db,
                ]
            }),
        )
    }

    /// Group-wise cosine correlation between left features `self` and right
    /// features `right`, both `(C, H, W)`. Output is `(G, D, H, W)` with
    /// `out[g, d, y, x] = cos(l_g[:, y, x], r_g[:, y, x - d])`, or
    /// [`CORRELATION_SENTINEL`] where `x - d` leaves the frame.
    pub fn group_correlation(self, right: Var<'g>, groups: usize, ndisp: usize) -> Var<'g> {
        let l = self.value();
        let r = right.value();
        let (c, h, w) = l.dims3();
        assert_eq!(r.shape(), l.shape(), "correlation needs equal feature shapes");
        assert!(groups > 0 && c % groups == 0, "channels must divide into groups");
        let cg = c / groups;
        let plane = h * w;
        let norms = |t: &Tensor| -> Vec<f64> {
            let mut n = vec![0.0; groups * plane];
            for gi in 0..groups {
                for ch in gi * cg..(gi + 1) * cg {
                    for (acc, v) in n[gi * plane..(gi + 1) * plane]
                        .iter_mut()
                        .zip(&t.data()[ch * plane..(ch + 1) * plane])
                    {
                        *acc += v * v;
                    }
                }
            }
            n.iter().map(|s| (s + CORRELATION_EPS).sqrt()).collect()
        };
        let nl = norms(&l);
        let nr = norms(&r);
        let mut out = vec![CORRELATION_SENTINEL; groups * ndisp * plane];
        for gi in 0..groups {
            for d in 0..ndisp {
                for y in 0..h {
                    for x in d..w {
                        let mut dot = 0.0;
                        for ch in gi * cg..(gi + 1) * cg {
                            dot += l.data()[ch * plane + y * w + x] * r.data()[ch * plane + y * w + x - d];
                        }
                        out[((gi * ndisp + d) * h + y) * w + x] =
                            dot / (nl[gi * plane + y * w + x] * nr[gi * plane + y * w + x - d]);
                    }
                }
            }
        }
        self.graph().op(
            Tensor::new(&[groups, ndisp, h, w], out),
            &[self, right],
            Box::new(move |g, p, out, need| {
                let l = &p[0];
                let r = &p[1];
                let mut dl = vec![0.0; c * plane];
                let mut dr = vec![0.0; c * plane];
                for gi in 0..groups {
                    for d in 0..ndisp {
                        for y in 0..h {
                            for x in d..w {
                                let oi = ((gi * ndisp + d) * h + y) * w + x;
                                let go = g.data()[oi];
                                if go == 0.0 {
                                    continue;
                                }
                                let cosv = out.data()[oi];
                                let li = gi * plane + y * w + x;
                                let ri = gi * plane + y * w + x - d;
                                let (na, nb) = (nl[li], nr[ri]);
                                for ch in gi * cg..(gi + 1) * cg {
                                    let a = l.data()[ch * plane + y * w + x];
                                    let b = r.data()[ch * plane + y * w + x - d];
                                    dl[ch * plane + y * w + x] += go * (b / (na * nb) - cosv * a / (na * na));
                                    dr[ch * plane + y * w + x - d] += go * (a / (na * nb) - cosv * b / (nb * nb));
                                }
                            }
                        }
                    }
                }
                vec![
                    need[0].then(|| Tensor::new(&[c, h, w], dl)),
                    need[1].then(|| Tensor::new(&[c, h, w], dr)),
                ]
            }),
        )
    }

    /// Softmax over the leading (disparity) axis of a `(D, H, W)` volume,
    /// then the expected bin index times `scale`. Returns `(H, W)`.
    pub fn soft_argmin(self, scale: f64) -> Var<'g> {
        let v = self.value();
        let (nd, h, w) = v.dims3();
        let plane = h * w;
        let probs = softmax_axis0(&v);
        let mut out = vec![0.0; plane];
        for k in 0..nd {
            for (o, p) in out.iter_mut().zip(&probs[k * plane..(k + 1) * plane]) {
                *o += p * k as f64 * scale;
            }
        }
        self.graph().op(
            Tensor::new(&[h, w], out),
            &[self],
            Box::new(move |g, _, e, _| {
                let mut d = vec![0.0; nd * plane];
                for k in 0..nd {
                    for i in 0..plane {
                        d[k * plane + i] =
                            g.data()[i] * probs[k * plane + i] * (k as f64 * scale - e.data()[i]);
                    }
                }
                vec![Some(Tensor::new(&[nd, h, w], d))]
            }),
        )
    }

    /// Bilinear upsampling of the last two axes by an integer factor, using
    /// pixel-center alignment and border clamping.
    pub fn upsample_bilinear(self, factor: usize) -> Var<'g> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let nd = shape.len();
        assert!(nd >= 2);
        let (h, w) = (shape[nd - 2], shape[nd - 1]);
        let lead: usize = shape[..nd - 2].iter().product();
        let (ho, wo) = (h * factor, w * factor);
        let ys = axis_taps(h, factor);
        let xs = axis_taps(w, factor);
        let mut out = vec![0.0; lead * ho * wo];
        for c in 0..lead {
            let src = &x.data()[c * h * w..(c + 1) * h * w];
            let dst = &mut out[c * ho * wo..(c + 1) * ho * wo];
            for (oy, &(y0, y1, ty)) in ys.iter().enumerate() {
                for (ox, &(x0, x1, tx)) in xs.iter().enumerate() {
                    dst[oy * wo + ox] = (1.0 - ty) * ((1.0 - tx) * src[y0 * w + x0] + tx * src[y0 * w + x1])
                        + ty * ((1.0 - tx) * src[y1 * w + x0] + tx * src[y1 * w + x1]);
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape[nd - 2] = ho;
        out_shape[nd - 1] = wo;
        self.graph().op(
            Tensor::new(&out_shape, out),
            &[self],
            Box::new(move |g, _, _, _| {
                let mut d = vec![0.0; lead * h * w];
                for c in 0..lead {
                    let gs = &g.data()[c * ho * wo..(c + 1) * ho * wo];
                    let dst = &mut d[c * h * w..(c + 1) * h * w];
                    for (oy, &(y0, y1, ty)) in ys.iter().enumerate() {
                        for (ox, &(x0, x1, tx)) in xs.iter().enumerate() {
                            let gv = gs[oy * wo + ox];
                            dst[y0 * w + x0] += gv * (1.0 - ty) * (1.0 - tx);
                            dst[y0 * w + x1] += gv * (1.0 - ty) * tx;
                            dst[y1 * w + x0] += gv * ty * (1.0 - tx);
                            dst[y1 * w + x1] += gv * ty * tx;
                        }
                    }
                }
                vec![Some(Tensor::new(&shape, d))]
            }),
        )
    }

    /// Bilinearly samples a `(C, H, W)` map at continuous cell coordinates
    /// `(u, v)` (column, row; cell centers at integers, clamped to the grid).
    /// Returns `(m, C)`.
    pub fn sample_bilinear(self, coords: &[(f64, f64)]) -> Var<'g> {
        let f = self.value();
        let (c, h, w) = f.dims3();
        let taps: Vec<[(usize, f64); 4]> = coords.iter().map(|&(u, v)| bilinear_taps(u, v, h, w)).collect();
        let m = coords.len();
        let mut out = vec![0.0; m * c];
        for (i, t) in taps.iter().enumerate() {
            for ch in 0..c {
                out[i * c + ch] = t.iter().map(|&(idx, wt)| wt * f.data()[ch * h * w + idx]).sum();
            }
        }
        self.graph().op(
            Tensor::new(&[m, c], out),
            &[self],
            Box::new(move |g, _, _, _| {
                let mut d = vec![0.0; c * h * w];
                for (i, t) in taps.iter().enumerate() {
                    for ch in 0..c {
                        let gv = g.data()[i * c + ch];
                        for &(idx, wt) in t {
                            d[ch * h * w + idx] += gv * wt;
                        }
                    }
                }
                vec![Some(Tensor::new(&[c, h, w], d))]
            }),
        )
    }
}

/// Stabilizer inside the correlation norms.
pub const CORRELATION_EPS: f64 = 1e-6;

/// Value of correlation entries whose right-view column falls outside the frame.
pub const CORRELATION_SENTINEL: f64 = -1.0;

fn softmax_axis0(v: &Tensor) -> Vec<f64> {
    let nd = v.shape()[0];
    let plane = v.len() / nd;
    let mut probs = vec![0.0; nd * plane];
    for i in 0..plane {
        let mx = (0..nd).map(|k| v.data()[k * plane + i]).fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for k in 0..nd {
            let e = (v.data()[k * plane + i] - mx).exp();
            probs[k * plane + i] = e;
            z += e;
        }
        for k in 0..nd {
            probs[k * plane + i] /= z;
        }
    }
    probs
}

/// Interpolation taps along one axis for upsampling `n` cells by `factor`.
fn axis_taps(n: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    (0..n * factor)
        .map(|o| {
            let src = ((o as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Flat indices and weights of the four bilinear neighbours of `(u, v)`.
pub(crate) fn bilinear_taps(u: f64, v: f64, h: usize, w: usize) -> [(usize, f64); 4] {
    let u = u.clamp(0.0, (w - 1) as f64);
    let v = v.clamp(0.0, (h - 1) as f64);
    let x0 = u.floor() as usize;
    let y0 = v.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let tx = u - x0 as f64;
    let ty = v - y0 as f64;
    [
        (y0 * w + x0, (1.0 - tx) * (1.0 - ty)),
        (y0 * w + x1, tx * (1.0 - ty)),
        (y1 * w + x0, (1.0 - tx) * ty),
        (y1 * w + x1, tx * ty),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::gradcheck::max_rel_error;
    use crate::autograd::Graph;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// Direct loop convolution with explicit bounds checks.
    fn conv2d_reference(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
        let (ci, h, wd) = x.dims3();
        let (co, _, k, _) = w.dims4();
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        Tensor::from_fn(&[co, ho, wo], |idx| {
            let o = idx / (ho * wo);
            let oy = (idx / wo) % ho;
            let ox = idx % wo;
            let mut s = b.data()[o];
            for c in 0..ci {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                            s += w.data()[((o * ci + c) * k + ky) * k + kx]
                                * x.at3(c, iy as usize, ix as usize);
                        }
                    }
                }
            }
            s
        })
    }

    #[test]
    fn conv2d_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for &(stride, pad, k) in &[(1, 1, 3), (2, 1, 3), (1, 0, 1), (2, 0, 3)] {
            let x = rand_tensor(&mut rng, &[2, 7, 9]);
            let w = rand_tensor(&mut rng, &[3, 2, k, k]);
            let b = rand_tensor(&mut rng, &[3]);
            let g = Graph::new();
            let y = g
                .constant(x.clone())
                .conv2d(g.constant(w.clone()), g.constant(b.clone()), stride, pad);
            let r = conv2d_reference(&x, &w, &b, stride, pad);
            assert_eq!(y.shape(), r.shape().to_vec());
            for (a, b) in y.value().data().iter().zip(r.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv2d_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = rand_tensor(&mut rng, &[2, 6, 5]);
        let w = rand_tensor(&mut rng, &[2, 2, 3, 3]);
        let b = rand_tensor(&mut rng, &[2]);
        let err = max_rel_error(&[x, w, b], |_, v| {
            let y = v[0].conv2d(v[1], v[2], 2, 1);
            y.mul(y).sum()
        });
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn conv3d_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = rand_tensor(&mut rng, &[2, 3, 4, 4]);
        let w = rand_tensor(&mut rng, &[2, 2, 3, 3, 3]);
        let b = rand_tensor(&mut rng, &[2]);
        let err = max_rel_error(&[x, w, b], |_, v| {
            let y = v[0].conv3d(v[1], v[2], 1);
            y.mul(y).sum()
        });
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn correlation_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let l = rand_tensor(&mut rng, &[4, 3, 6]);
        let r = rand_tensor(&mut rng, &[4, 3, 6]);
        let err = max_rel_error(&[l, r], |_, v| {
            let y = v[0].group_correlation(v[1], 2, 3);
            y.mul(y).sum()
        });
        assert!(err < 1e-5, "err {err}");
    }

    #[test]
    fn soft_argmin_and_upsample_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let v = rand_tensor(&mut rng, &[4, 3, 3]);
        let err = max_rel_error(&[v], |_, x| {
            let d = x[0].soft_argmin(4.0).upsample_bilinear(2);
            d.mul(d).sum()
        });
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn sample_bilinear_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let f = rand_tensor(&mut rng, &[3, 4, 5]);
        let pts = [(0.3, 1.7), (3.9, 0.0), (2.0, 2.5)];
        let err = max_rel_error(&[f], |_, x| {
            let d = x[0].sample_bilinear(&pts).l2_normalize_rows(1e-12);
            d.mul(d.add_scalar(0.5)).sum()
        });
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn upsample_of_constant_is_constant() {
        let g = Graph::new();
        let x = g.constant(Tensor::full(&[1, 3, 4], 2.5));
        let y = x.upsample_bilinear(4);
        assert_eq!(y.shape(), vec![1, 12, 16]);
        assert!(y.value().data().iter().all(|&v| (v - 2.5).abs() < 1e-15));
    }
}
