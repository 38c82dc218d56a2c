//! Ground-truth correspondences between left and right interest points.
//!
//! Left points are warped into the right view with the ground-truth
//! disparity. A left/right pair matches when each is the other's nearest
//! candidate inside an `eps` box around the warped location. Left points
//! without a usable disparity are excluded from supervision altogether.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::interest::{nearest_pixel, PointSet};

/// Matched pairs plus the unmatched and excluded index sets of both views.
/// Every index list is sorted ascending; `pairs` is sorted by left index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MatchGT {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_l: Vec<usize>,
    pub unmatched_r: Vec<usize>,
    pub excluded_l: Vec<usize>,
    pub excluded_r: Vec<usize>,
}

impl MatchGT {
    /// Checks uniqueness and that each view's indices are partitioned.
    pub fn check_invariants(&self, m: usize, n: usize) -> Result<()> {
        let mut seen_l = vec![0u8; m];
        let mut seen_r = vec![0u8; n];
        let mark = |seen: &mut [u8], i: usize, side: &str| -> Result<()> {
            let slot = seen
                .get_mut(i)
                .ok_or_else(|| Error::Contract(format!("{side} index {i} out of range")))?;
            *slot += 1;
            Ok(())
        };
        for &(i, j) in &self.pairs {
            mark(&mut seen_l, i, "left")?;
            mark(&mut seen_r, j, "right")?;
        }
        for &i in self.unmatched_l.iter().chain(&self.excluded_l) {
            mark(&mut seen_l, i, "left")?;
        }
        for &j in self.unmatched_r.iter().chain(&self.excluded_r) {
            mark(&mut seen_r, j, "right")?;
        }
        if let Some(i) = seen_l.iter().position(|&c| c != 1) {
            return Err(Error::Contract(format!("left index {i} appears {} times", seen_l[i])));
        }
        if let Some(j) = seen_r.iter().position(|&c| c != 1) {
            return Err(Error::Contract(format!("right index {j} appears {} times", seen_r[j])));
        }
        Ok(())
    }
}

/// Ground-truth maps consulted when warping points.
#[derive(Clone, Copy)]
pub struct DisparityGt<'a> {
    pub disparity: &'a Grid<f64>,
    pub valid: &'a Grid<bool>,
    pub occ: &'a Grid<bool>,
}

impl<'a> DisparityGt<'a> {
    pub fn new(disparity: &'a Grid<f64>, valid: &'a Grid<bool>, occ: &'a Grid<bool>) -> Result<Self> {
        if !disparity.same_dims(valid) || !disparity.same_dims(occ) {
            return Err(Error::Contract(format!(
                "disparity {:?}, valid {:?} and occlusion {:?} maps differ in size",
                disparity.dims(),
                valid.dims(),
                occ.dims()
            )));
        }
        Ok(Self { disparity, valid, occ })
    }

    /// Bilinear disparity at `(x, y)` using only valid pixels with positive
    /// weight; `None` when the footprint holds no valid pixel.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let (h, w) = self.disparity.dims();
        let (x0, y0) = (x.floor(), y.floor());
        let (tx, ty) = (x - x0, y - y0);
        let mut num = 0.0;
        let mut den = 0.0;
        for (dx, wx) in [(0, 1.0 - tx), (1, tx)] {
            for (dy, wy) in [(0, 1.0 - ty), (1, ty)] {
                let wt = wx * wy;
                let (px, py) = (x0 as i64 + dx, y0 as i64 + dy);
                if wt <= 0.0 || px < 0 || py < 0 || px >= w as i64 || py >= h as i64 {
                    continue;
                }
                let (px, py) = (px as usize, py as usize);
                if *self.valid.get(px, py) {
                    num += wt * self.disparity.get(px, py);
                    den += wt;
                }
            }
        }
        (den > 0.0).then(|| num / den)
    }

    pub fn occluded(&self, x: f64, y: f64) -> bool {
        let (h, w) = self.disparity.dims();
        let (px, py) = nearest_pixel(x, y, h, w);
        *self.occ.get(px, py)
    }
}

/// Default match tolerance in pixels.
pub const DEFAULT_EPS: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
enum LeftState {
    Excluded,
    Occluded,
    Warped(f64, f64),
}

fn warp_left(p_l: &PointSet, gt: &DisparityGt<'_>) -> Vec<LeftState> {
    p_l.coords()
        .iter()
        .map(|&(x, y)| match gt.sample(x, y) {
            None => LeftState::Excluded,
            Some(_) if gt.occluded(x, y) => LeftState::Occluded,
            Some(d) => LeftState::Warped(x - d, y),
        })
        .collect()
}

/// Builds ground-truth matches by warping `p_l` into the right view.
pub fn build_gt_matches(
    p_l: &PointSet,
    p_r: &PointSet,
    disparity: &Grid<f64>,
    valid_mask: &Grid<bool>,
    occ_mask: &Grid<bool>,
    eps: f64,
) -> Result<MatchGT> {
    if !(eps > 0.0) {
        return Err(Error::Contract(format!("match tolerance must be positive, got {eps}")));
    }
    let gt = DisparityGt::new(disparity, valid_mask, occ_mask)?;
    let states = warp_left(p_l, &gt);
    let right = p_r.coords();

    // Right indices sorted by row for band queries.
    let mut by_row: Vec<usize> = (0..right.len()).collect();
    by_row.sort_by(|&a, &b| right[a].1.total_cmp(&right[b].1).then(a.cmp(&b)));
    let rows: Vec<f64> = by_row.iter().map(|&j| right[j].1).collect();

    let mut best_for_left: Vec<Option<(f64, usize)>> = vec![None; states.len()];
    let mut best_for_right: Vec<Option<(f64, usize)>> = vec![None; right.len()];
    let better = |cand: (f64, usize), cur: Option<(f64, usize)>| match cur {
        None => true,
        Some(c) => cand.0 < c.0 || (cand.0 == c.0 && cand.1 < c.1),
    };

    for (i, st) in states.iter().enumerate() {
        let LeftState::Warped(wx, wy) = *st else { continue };
        // Widened band; the exact test below decides.
        let lo = rows.partition_point(|&y| y < wy - eps - 1e-9);
        let hi = rows.partition_point(|&y| y <= wy + eps + 1e-9);
        for &j in &by_row[lo..hi] {
            let (rx, ry) = right[j];
            if (rx - wx).abs() > eps || (ry - wy).abs() > eps {
                continue;
            }
            let dist = ((rx - wx).powi(2) + (ry - wy).powi(2)).sqrt();
            if better((dist, j), best_for_left[i]) {
                best_for_left[i] = Some((dist, j));
            }
            if better((dist, i), best_for_right[j]) {
                best_for_right[j] = Some((dist, i));
            }
        }
    }

    let mut gt_out = MatchGT::default();
    let mut right_paired = vec![false; right.len()];
    for (i, st) in states.iter().enumerate() {
        match st {
            LeftState::Excluded => gt_out.excluded_l.push(i),
            LeftState::Occluded => gt_out.unmatched_l.push(i),
            LeftState::Warped(..) => match best_for_left[i] {
                Some((_, j)) if best_for_right[j].map(|b| b.1) == Some(i) => {
                    gt_out.pairs.push((i, j));
                    right_paired[j] = true;
                }
                _ => gt_out.unmatched_l.push(i),
            },
        }
    }

    let excluded_left: Vec<(f64, f64)> = gt_out.excluded_l.iter().map(|&i| p_l.coords()[i]).collect();
    for (j, &(rx, ry)) in right.iter().enumerate() {
        if right_paired[j] {
            continue;
        }
        if could_match_excluded(rx, ry, &excluded_left, eps) {
            gt_out.excluded_r.push(j);
        } else {
            gt_out.unmatched_r.push(j);
        }
    }
    Ok(gt_out)
}

/// A right point shares a row band with an excluded left point lying at or
/// right of it, so a missing disparity might have matched them.
fn could_match_excluded(rx: f64, ry: f64, excluded_left: &[(f64, f64)], eps: f64) -> bool {
    excluded_left
        .iter()
        .any(|&(lx, ly)| (ly - ry).abs() <= eps && rx <= lx + eps)
}

/// Exhaustive reference for [`build_gt_matches`], used by the test suites.
///
/// Enumerates every `(i, j)` pair, then keeps a pair exactly when no other
/// candidate of `i` or of `j` beats it under the (distance, index) order.
pub fn brute_force_match_oracle(
    p_l: &PointSet,
    p_r: &PointSet,
    disparity: &Grid<f64>,
    valid_mask: &Grid<bool>,
    occ_mask: &Grid<bool>,
    eps: f64,
) -> Result<MatchGT> {
    if !(eps > 0.0) {
        return Err(Error::Contract("eps must be positive".into()));
    }
    if !disparity.same_dims(valid_mask) || !disparity.same_dims(occ_mask) {
        return Err(Error::Contract("map sizes differ".into()));
    }
    let (h, w) = disparity.dims();
    let m = p_l.len();
    let n = p_r.len();

    // Independent bilinear lookup over the valid footprint.
    let lookup = |x: f64, y: f64| -> Option<f64> {
        let xf = x.floor() as i64;
        let yf = y.floor() as i64;
        let fx = x - xf as f64;
        let fy = y - yf as f64;
        let taps = [
            (xf, yf, (1.0 - fx) * (1.0 - fy)),
            (xf + 1, yf, fx * (1.0 - fy)),
            (xf, yf + 1, (1.0 - fx) * fy),
            (xf + 1, yf + 1, fx * fy),
        ];
        let (mut s, mut ws) = (0.0, 0.0);
        for (px, py, wt) in taps {
            if wt > 0.0
                && (0..w as i64).contains(&px)
                && (0..h as i64).contains(&py)
                && valid_mask.data()[py as usize * w + px as usize]
            {
                s += wt * disparity.data()[py as usize * w + px as usize];
                ws += wt;
            }
        }
        if ws > 0.0 {
            Some(s / ws)
        } else {
            None
        }
    };

    let mut warped: Vec<Option<(f64, f64)>> = vec![None; m];
    let mut excluded = vec![false; m];
    for (i, &(x, y)) in p_l.coords().iter().enumerate() {
        match lookup(x, y) {
            None => excluded[i] = true,
            Some(d) => {
                let px = (x.round().max(0.0) as usize).min(w - 1);
                let py = (y.round().max(0.0) as usize).min(h - 1);
                if !occ_mask.data()[py * w + px] {
                    warped[i] = Some((x - d, y));
                }
            }
        }
    }

    let mut dist = vec![vec![None; n]; m];
    for i in 0..m {
        let Some((wx, wy)) = warped[i] else { continue };
        for (j, &(rx, ry)) in p_r.coords().iter().enumerate() {
            if (rx - wx).abs() <= eps && (ry - wy).abs() <= eps {
                dist[i][j] = Some(((rx - wx).powi(2) + (ry - wy).powi(2)).sqrt());
            }
        }
    }

    let mut out = MatchGT::default();
    let mut paired_r = vec![false; n];
    for i in 0..m {
        if excluded[i] {
            out.excluded_l.push(i);
            continue;
        }
        let mut partner = None;
        for j in 0..n {
            let Some(dij) = dist[i][j] else { continue };
            let left_best = (0..n).all(|k| match dist[i][k] {
                Some(dik) => k == j || dij < dik || (dij == dik && j < k),
                None => true,
            });
            let right_best = (0..m).all(|k| match dist[k][j] {
                Some(dkj) => k == i || dij < dkj || (dij == dkj && i < k),
                None => true,
            });
            if left_best && right_best {
                partner = Some(j);
            }
        }
        match partner {
            Some(j) => {
                out.pairs.push((i, j));
                paired_r[j] = true;
            }
            None => out.unmatched_l.push(i),
        }
    }
    for j in 0..n {
        if paired_r[j] {
            continue;
        }
        let (rx, ry) = p_r.coords()[j];
        let maybe = (0..m).any(|i| {
            let (lx, ly) = p_l.coords()[i];
            excluded[i] && (ly - ry).abs() <= eps && rx <= lx + eps
        });
        if maybe {
            out.excluded_r.push(j);
        } else {
            out.unmatched_r.push(j);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(h: usize, w: usize, d: f64) -> (Grid<f64>, Grid<bool>, Grid<bool>) {
        (
            Grid::filled(h, w, d),
            Grid::filled(h, w, true),
            Grid::filled(h, w, false),
        )
    }

    #[test]
    fn exact_warp_matches() {
        let (d, v, o) = flat(12, 20, 3.0);
        let l = PointSet::from_coords(vec![(10.0, 5.0)]);
        let r = PointSet::from_coords(vec![(7.0, 5.0)]);
        let gt = build_gt_matches(&l, &r, &d, &v, &o, 1.0).unwrap();
        assert_eq!(gt.pairs, vec![(0, 0)]);
        assert!(gt.unmatched_l.is_empty() && gt.unmatched_r.is_empty());
    }

    #[test]
    fn outside_tolerance_is_unmatched() {
        let (d, v, o) = flat(12, 20, 3.0);
        let l = PointSet::from_coords(vec![(10.0, 5.0)]);
        let r = PointSet::from_coords(vec![(8.2, 5.0)]);
        let gt = build_gt_matches(&l, &r, &d, &v, &o, 1.0).unwrap();
        assert!(gt.pairs.is_empty());
        assert_eq!(gt.unmatched_l, vec![0]);
        assert_eq!(gt.unmatched_r, vec![0]);
    }

    #[test]
    fn empty_left_leaves_all_right_unmatched() {
        let (d, v, o) = flat(8, 8, 1.0);
        let r = PointSet::from_coords(vec![(1.0, 1.0), (3.0, 4.0)]);
        for f in [build_gt_matches, brute_force_match_oracle] {
            let gt = f(&PointSet::default(), &r, &d, &v, &o, 1.0).unwrap();
            assert!(gt.pairs.is_empty());
            assert_eq!(gt.unmatched_r, vec![0, 1]);
        }
    }

    #[test]
    fn duplicate_right_points_pair_lower_index() {
        let (d, v, o) = flat(8, 16, 2.0);
        let l = PointSet::from_coords(vec![(6.0, 3.0)]);
        let r = PointSet::from_coords(vec![(9.0, 3.0), (4.0, 3.0), (4.0, 3.0)]);
        for f in [build_gt_matches, brute_force_match_oracle] {
            let gt = f(&l, &r, &d, &v, &o, 1.0).unwrap();
            assert_eq!(gt.pairs, vec![(0, 1)]);
            assert_eq!(gt.unmatched_r, vec![0, 2]);
        }
    }

    #[test]
    fn occluded_and_invalid_points() {
        let (d, mut v, mut o) = flat(8, 16, 2.0);
        o.set(6, 3, true);
        v.set(12, 5, false);
        let l = PointSet::from_coords(vec![(6.0, 3.0), (12.0, 5.0)]);
        let r = PointSet::from_coords(vec![(4.0, 3.0), (10.0, 5.0)]);
        let gt = build_gt_matches(&l, &r, &d, &v, &o, 1.0).unwrap();
        assert!(gt.pairs.is_empty());
        assert_eq!(gt.unmatched_l, vec![0]);
        assert_eq!(gt.excluded_l, vec![1]);
        assert_eq!(gt.unmatched_r, vec![0]);
        assert_eq!(gt.excluded_r, vec![1]);
        gt.check_invariants(2, 2).unwrap();
    }

    #[test]
    fn bilinear_sampling_skips_invalid_taps() {
        let mut d = Grid::filled(4, 4, 2.0);
        d.set(2, 1, 6.0);
        let mut v = Grid::filled(4, 4, true);
        let o = Grid::filled(4, 4, false);
        let gt = DisparityGt::new(&d, &v, &o).unwrap();
        assert_eq!(gt.sample(1.5, 1.0), Some(4.0));
        v.set(2, 1, false);
        let gt = DisparityGt::new(&d, &v, &o).unwrap();
        assert_eq!(gt.sample(1.5, 1.0), Some(2.0));
        v.set(1, 1, false);
        let gt = DisparityGt::new(&d, &v, &o).unwrap();
        assert_eq!(gt.sample(1.5, 1.0), None);
    }

    #[test]
    fn shape_mismatch_is_contract_error() {
        let d = Grid::filled(4, 4, 0.0);
        let v = Grid::filled(4, 5, true);
        let o = Grid::filled(4, 4, false);
        let p = PointSet::default();
        assert!(matches!(build_gt_matches(&p, &p, &d, &v, &o, 1.0), Err(Error::Contract(_))));
    }
}
