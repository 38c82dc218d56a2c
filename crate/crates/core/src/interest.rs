//! Interest maps, point sets, teacher detectors and non-maximum suppression.
//!
//! Coordinates are continuous pixel positions with pixel centers at integer
//! values: `(x, y)` is column then row.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Per-pixel interest probabilities plus binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct InterestMap {
    pub probs: Grid<f64>,
    pub labels: Grid<bool>,
}

impl InterestMap {
    /// Labels every pixel whose probability reaches `threshold`.
    pub fn from_probs(probs: Grid<f64>, threshold: f64) -> Self {
        let labels = probs.map(|&p| p > 0.0 && p >= threshold);
        Self { probs, labels }
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            probs: Grid::filled(height, width, 0.0),
            labels: Grid::filled(height, width, false),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.probs.dims()
    }
}

/// An ordered set of interest points with scores in `[0, 1]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointSet {
    coords: Vec<(f64, f64)>,
    scores: Vec<f64>,
}

impl PointSet {
    pub fn new(coords: Vec<(f64, f64)>, scores: Vec<f64>) -> Result<Self> {
        if coords.len() != scores.len() {
            return Err(Error::Contract(format!(
                "{} coordinates but {} scores",
                coords.len(),
                scores.len()
            )));
        }
        if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Contract(format!("point score {s} outside [0, 1]")));
        }
        Ok(Self { coords, scores })
    }

    /// Points with unit score.
    pub fn from_coords(coords: Vec<(f64, f64)>) -> Self {
        let scores = vec![1.0; coords.len()];
        Self { coords, scores }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[(f64, f64)] {
        &self.coords
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn iter(&self) -> impl Iterator<Item = ((f64, f64), f64)> + '_ {
        self.coords.iter().copied().zip(self.scores.iter().copied())
    }

    /// Sorts into canonical order: descending score, ties in row-major order.
    pub fn into_canonical_order(self) -> Self {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| canonical_cmp(self.scores[a], self.coords[a], self.scores[b], self.coords[b]));
        self.permuted(&idx)
    }

    /// Point `perm[k]` becomes point `k`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            coords: perm.iter().map(|&i| self.coords[i]).collect(),
            scores: perm.iter().map(|&i| self.scores[i]).collect(),
        }
    }

    /// Errors unless every point lies in `[0, width) x [0, height)`.
    pub fn check_bounds(&self, height: usize, width: usize) -> Result<()> {
        for &(x, y) in &self.coords {
            if !(x >= 0.0 && x < width as f64 && y >= 0.0 && y < height as f64) {
                return Err(Error::Contract(format!(
                    "point ({x}, {y}) outside a {width}x{height} image"
                )));
            }
        }
        Ok(())
    }

    /// A probability map holding each point's score at its nearest pixel.
    pub fn to_interest_map(&self, height: usize, width: usize, threshold: f64) -> InterestMap {
        let mut probs = Grid::filled(height, width, 0.0);
        for ((x, y), s) in self.iter() {
            let (px, py) = nearest_pixel(x, y, height, width);
            if s > *probs.get(px, py) {
                probs.set(px, py, s);
            }
        }
        InterestMap::from_probs(probs, threshold)
    }
}

fn canonical_cmp(sa: f64, a: (f64, f64), sb: f64, b: (f64, f64)) -> Ordering {
    sb.total_cmp(&sa)
        .then(a.1.total_cmp(&b.1))
        .then(a.0.total_cmp(&b.0))
}

pub(crate) fn nearest_pixel(x: f64, y: f64, height: usize, width: usize) -> (usize, usize) {
    let px = x.round().clamp(0.0, (width - 1) as f64) as usize;
    let py = y.round().clamp(0.0, (height - 1) as f64) as usize;
    (px, py)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmsParams {
    pub radius: usize,
    pub threshold: f64,
    pub max_points: usize,
}

impl Default for NmsParams {
    fn default() -> Self {
        Self {
            radius: 4,
            threshold: 0.015,
            max_points: 512,
        }
    }
}

/// Greedy non-maximum suppression over a probability map.
///
/// Candidates are pixels with probability at least `threshold`, visited in
/// descending score (ties in row-major order). A kept point suppresses every
/// candidate within Chebyshev distance `radius`.
pub fn nms_filter(map: &InterestMap, radius: usize, threshold: f64, max_points: usize) -> Result<PointSet> {
    if radius < 1 {
        return Err(Error::Contract("NMS radius must be at least 1".into()));
    }
    let (h, w) = map.dims();
    let probs = map.probs.data();
    let mut candidates: Vec<usize> = (0..h * w)
        .filter(|&i| probs[i] >= threshold && probs[i] > 0.0)
        .collect();
    // Row-major index order breaks ties, so a stable sort on score suffices.
    candidates.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));

    let mut suppressed = vec![false; h * w];
    let mut coords = Vec::new();
    let mut scores = Vec::new();
    for i in candidates {
        if coords.len() >= max_points {
            break;
        }
        if suppressed[i] {
            continue;
        }
        let (x, y) = (i % w, i / w);
        coords.push((x as f64, y as f64));
        scores.push(probs[i].min(1.0));
        for yy in y.saturating_sub(radius)..(y + radius + 1).min(h) {
            for xx in x.saturating_sub(radius)..(x + radius + 1).min(w) {
                suppressed[yy * w + xx] = true;
            }
        }
    }
    Ok(PointSet { coords, scores })
}

/// Source of teacher interest maps for one view.
pub trait Detector {
    /// `oracle` carries the renderer's junction labels when available.
    fn detect(&self, image: &Grid<f64>, oracle: Option<&PointSet>) -> InterestMap;
}

/// Emits probability 1 at the renderer's oracle points and 0 elsewhere,
/// optionally spreading each point with a Gaussian of width `blur_sigma`.
#[derive(Clone, Debug, Default)]
pub struct OracleDetector {
    pub blur_sigma: Option<f64>,
}

impl Detector for OracleDetector {
    fn detect(&self, image: &Grid<f64>, oracle: Option<&PointSet>) -> InterestMap {
        let (h, w) = image.dims();
        let Some(points) = oracle else {
            return InterestMap::empty(h, w);
        };
        let mut probs = Grid::filled(h, w, 0.0);
        let mut labels = Grid::filled(h, w, false);
        for &(x, y) in points.coords() {
            let (px, py) = nearest_pixel(x, y, h, w);
            labels.set(px, py, true);
            match self.blur_sigma {
                None => probs.set(px, py, 1.0),
                Some(sigma) => {
                    let r = (3.0 * sigma).ceil() as usize;
                    for yy in py.saturating_sub(r)..(py + r + 1).min(h) {
                        for xx in px.saturating_sub(r)..(px + r + 1).min(w) {
                            let d2 = (xx as f64 - x).powi(2) + (yy as f64 - y).powi(2);
                            let v = (-d2 / (2.0 * sigma * sigma)).exp();
                            if v > *probs.get(xx, yy) {
                                probs.set(xx, yy, v);
                            }
                        }
                    }
                    probs.set(px, py, 1.0);
                }
            }
        }
        InterestMap { probs, labels }
    }
}

/// Classical Harris corner response, normalized to `[0, 1]` by its maximum.
#[derive(Clone, Debug)]
pub struct HarrisDetector {
    pub k: f64,
    pub sigma: f64,
    pub threshold: f64,
}

impl Default for HarrisDetector {
    fn default() -> Self {
        Self {
            k: 0.04,
            sigma: 1.0,
            threshold: 0.015,
        }
    }
}

impl HarrisDetector {
    /// Raw corner response `det(M) - k tr(M)^2` of the smoothed structure tensor.
    pub fn response(&self, image: &Grid<f64>) -> Grid<f64> {
        let (h, w) = image.dims();
        let px = |x: isize, y: isize| -> f64 {
            let xc = x.clamp(0, w as isize - 1) as usize;
            let yc = y.clamp(0, h as isize - 1) as usize;
            *image.get(xc, yc)
        };
        let mut ixx = Grid::filled(h, w, 0.0);
        let mut iyy = Grid::filled(h, w, 0.0);
        let mut ixy = Grid::filled(h, w, 0.0);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let gx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1))
                    - (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
                let gy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1))
                    - (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
                let (gx, gy) = (gx / 8.0, gy / 8.0);
                ixx.set(x as usize, y as usize, gx * gx);
                iyy.set(x as usize, y as usize, gy * gy);
                ixy.set(x as usize, y as usize, gx * gy);
            }
        }
        let kernel = gaussian_kernel(self.sigma);
        let sxx = separable_blur(&ixx, &kernel);
        let syy = separable_blur(&iyy, &kernel);
        let sxy = separable_blur(&ixy, &kernel);
        Grid::from_fn(h, w, |x, y| {
            let (a, b, c) = (*sxx.get(x, y), *syy.get(x, y), *sxy.get(x, y));
            a * b - c * c - self.k * (a + b) * (a + b)
        })
    }
}

impl Detector for HarrisDetector {
    fn detect(&self, image: &Grid<f64>, _oracle: Option<&PointSet>) -> InterestMap {
        let r = self.response(image);
        let max = r.data().iter().cloned().fold(0.0, f64::max);
        let probs = if max > 0.0 {
            r.map(|&v| (v / max).max(0.0))
        } else {
            r.map(|_| 0.0)
        };
        InterestMap::from_probs(probs, self.threshold)
    }
}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (2.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

fn separable_blur(src: &Grid<f64>, kernel: &[f64]) -> Grid<f64> {
    let (h, w) = src.dims();
    let r = (kernel.len() / 2) as isize;
    let tmp = Grid::from_fn(h, w, |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, kv)| {
                let xx = (x as isize + i as isize - r).clamp(0, w as isize - 1) as usize;
                kv * src.get(xx, y)
            })
            .sum()
    });
    Grid::from_fn(h, w, |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, kv)| {
                let yy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
                kv * tmp.get(x, yy)
            })
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Quadratic reference: sort all candidates, keep each one that is not
    /// within `radius` of an already kept point.
    fn brute_force_nms(map: &InterestMap, radius: usize, threshold: f64, max_points: usize) -> Vec<(usize, usize)> {
        let (h, w) = map.dims();
        let mut cands = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let p = *map.probs.get(x, y);
                if p >= threshold && p > 0.0 {
                    cands.push((p, y, x));
                }
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut kept: Vec<(usize, usize)> = Vec::new();
        for (_, y, x) in cands {
            if kept.len() == max_points {
                break;
            }
            let clash = kept
                .iter()
                .any(|&(kx, ky)| kx.abs_diff(x).max(ky.abs_diff(y)) <= radius);
            if !clash {
                kept.push((x, y));
            }
        }
        kept
    }

    fn map_with(h: usize, w: usize, pts: &[(usize, usize, f64)]) -> InterestMap {
        let mut probs = Grid::filled(h, w, 0.0);
        for &(x, y, p) in pts {
            probs.set(x, y, p);
        }
        InterestMap::from_probs(probs, 0.015)
    }

    #[test]
    fn nms_suppresses_neighbour() {
        let map = map_with(20, 20, &[(10, 10, 0.9), (11, 10, 0.8)]);
        let ps = nms_filter(&map, 2, 0.015, 512).unwrap();
        assert_eq!(ps.coords(), &[(10.0, 10.0)]);
    }

    #[test]
    fn nms_keeps_distant_points() {
        let map = map_with(20, 20, &[(2, 2, 0.5), (10, 10, 0.9), (2, 15, 0.7)]);
        let ps = nms_filter(&map, 2, 0.015, 512).unwrap();
        assert_eq!(ps.coords(), &[(10.0, 10.0), (2.0, 15.0), (2.0, 2.0)]);
    }

    #[test]
    fn nms_rejects_zero_radius() {
        let map = map_with(4, 4, &[]);
        assert!(nms_filter(&map, 0, 0.1, 10).is_err());
    }

    #[test]
    fn nms_matches_quadratic_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(500);
        for _ in 0..5 {
            let mut pts = Vec::new();
            for _ in 0..500 {
                // Quantized scores create plenty of ties.
                let p = (rng.random_range(0..40) as f64) / 40.0;
                pts.push((rng.random_range(0..96), rng.random_range(0..96), p));
            }
            let map = map_with(96, 96, &pts);
            let fast = nms_filter(&map, 4, 0.015, 10_000).unwrap();
            let slow = brute_force_nms(&map, 4, 0.015, 10_000);
            let fast: Vec<(usize, usize)> = fast.coords().iter().map(|&(x, y)| (x as usize, y as usize)).collect();
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn nms_truncates_to_budget() {
        let pts: Vec<_> = (0..10).map(|i| (i * 5, 0, 0.5 + i as f64 * 0.01)).collect();
        let ps = nms_filter(&map_with(4, 60, &pts), 1, 0.0, 3).unwrap();
        assert_eq!(ps.len(), 3);
        assert_eq!(ps.coords()[0], (45.0, 0.0));
    }

    proptest! {
        #[test]
        fn nms_spacing_idempotence_monotonicity(
            pts in proptest::collection::vec((0usize..48, 0usize..48, 0.0f64..1.0), 0..200),
            radius in 1usize..6,
            t_hi in 0.2f64..0.6,
            t_lo in 0.0f64..0.2,
        ) {
            let map = map_with(48, 48, &pts);
            let kept = nms_filter(&map, radius, t_hi, usize::MAX).unwrap();
            for (i, a) in kept.coords().iter().enumerate() {
                for b in &kept.coords()[i + 1..] {
                    let cheb = (a.0 - b.0).abs().max((a.1 - b.1).abs());
                    prop_assert!(cheb > radius as f64);
                }
            }
            let again = nms_filter(&kept.to_interest_map(48, 48, t_hi), radius, t_hi, usize::MAX).unwrap();
            prop_assert_eq!(&again, &kept);

            let lower = nms_filter(&map, radius, t_lo, usize::MAX).unwrap();
            for c in kept.coords() {
                prop_assert!(lower.coords().contains(c));
            }
        }
    }

    #[test]
    fn canonical_order_is_score_then_row_major() {
        let ps = PointSet::new(vec![(5.0, 1.0), (1.0, 1.0), (0.0, 3.0)], vec![0.5, 0.5, 0.9]).unwrap();
        let ps = ps.into_canonical_order();
        assert_eq!(ps.coords(), &[(0.0, 3.0), (1.0, 1.0), (5.0, 1.0)]);
    }

    #[test]
    fn harris_constant_image_is_empty() {
        let img = Grid::filled(32, 32, 0.4);
        let m = HarrisDetector::default().detect(&img, None);
        assert!(m.probs.data().iter().all(|&p| p == 0.0));
        assert_eq!(m.labels.count(), 0);
    }

    #[test]
    fn oracle_detector_marks_points() {
        let img = Grid::filled(16, 16, 0.0);
        let pts = PointSet::from_coords(vec![(3.0, 4.0), (10.0, 12.0)]);
        let m = OracleDetector::default().detect(&img, Some(&pts));
        assert_eq!(*m.probs.get(3, 4), 1.0);
        assert_eq!(*m.probs.get(10, 12), 1.0);
        assert_eq!(m.probs.data().iter().filter(|&&p| p > 0.0).count(), 2);
        assert_eq!(m.labels.count(), 2);

        let blurred = OracleDetector { blur_sigma: Some(1.0) }.detect(&img, Some(&pts));
        assert_eq!(*blurred.probs.get(3, 4), 1.0);
        assert!(*blurred.probs.get(4, 4) > 0.5 && *blurred.probs.get(4, 4) < 1.0);
        assert_eq!(blurred.labels.count(), 2);
    }
}
