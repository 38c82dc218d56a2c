use rand::Rng;

use super::ShapeKind;

/// Region covered by one layer, in left-view pixel coordinates.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// Covers the whole (unbounded) plane.
    Full,
    /// Convex polygon with integer vertices in counter-clockwise order
    /// (image coordinates, y down). Edges are inclusive.
    Polygon(Vec<(i64, i64)>),
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    /// Thick segment; endpoints are integer pixels.
    Segment { a: (i64, i64), b: (i64, i64), half_width: f64 },
}

impl Shape {
    /// Convex hull of `points`.
    pub fn polygon(points: Vec<(i64, i64)>) -> Self {
        Shape::Polygon(convex_hull(points))
    }

    pub fn covers(&self, x: i64, y: i64) -> bool {
        match self {
            Shape::Polygon(v) => {
                v.len() >= 3
                    && (0..v.len()).all(|i| {
                        let (a, b) = (v[i], v[(i + 1) % v.len()]);
                        cross(a, b, (x, y)) >= 0
                    })
            }
            _ => self.covers_f(x as f64, y as f64),
        }
    }

    pub fn covers_f(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Full => true,
            Shape::Polygon(v) => {
                v.len() >= 3
                    && (0..v.len()).all(|i| {
                        let (a, b) = (v[i], v[(i + 1) % v.len()]);
                        let c = (b.0 - a.0) as f64 * (y - a.1 as f64) - (b.1 - a.1) as f64 * (x - a.0 as f64);
                        c >= -1e-12
                    })
            }
            Shape::Ellipse { cx, cy, rx, ry } => ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0,
            Shape::Segment { a, b, half_width } => segment_distance((x, y), *a, *b) <= *half_width,
        }
    }

    /// Corner and end points.
    pub fn vertices(&self) -> Vec<(i64, i64)> {
        match self {
            Shape::Polygon(v) => v.clone(),
            Shape::Segment { a, b, .. } => vec![*a, *b],
            Shape::Full | Shape::Ellipse { .. } => Vec::new(),
        }
    }

    /// A random shape of `kind` that stays inside both views for disparity `d`.
    pub fn random(kind: ShapeKind, h: i64, w: i64, d: i64, rng: &mut impl Rng) -> Self {
        let min_side = h.min(w) as f64;
        let r = rng.random_range(min_side * 0.1..min_side * 0.25);
        let ri = r.ceil() as i64;
        let cx_lo = (d + ri).min(w - 1 - ri).max(0);
        let cx_hi = (w - 1 - ri).max(cx_lo);
        let cy_lo = ri.min(h - 1 - ri).max(0);
        let cy_hi = (h - 1 - ri).max(cy_lo);
        let cx = rng.random_range(cx_lo..=cx_hi);
        let cy = rng.random_range(cy_lo..=cy_hi);
        match kind {
            ShapeKind::Polygon => {
                let k = rng.random_range(3..=5);
                let mut angles: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
                angles.sort_by(f64::total_cmp);
                let pts = angles
                    .iter()
                    .map(|t| {
                        (
                            cx + (r * t.cos()).round() as i64,
                            cy + (r * t.sin()).round() as i64,
                        )
                    })
                    .collect();
                let hull = convex_hull(pts);
                if hull.len() >= 3 && polygon_area2(&hull) >= 16 {
                    Shape::Polygon(hull)
                } else {
                    let s = ri.max(3);
                    Shape::polygon(vec![(cx - s, cy - s), (cx + s, cy - s), (cx + s, cy + s), (cx - s, cy + s)])
                }
            }
            ShapeKind::Ellipse => Shape::Ellipse {
                cx: cx as f64,
                cy: cy as f64,
                rx: r,
                ry: rng.random_range(r * 0.5..r * 1.2),
            },
            ShapeKind::LineSegment => {
                let t = rng.random_range(0.0..std::f64::consts::PI);
                let (dx, dy) = ((r * t.cos()).round() as i64, (r * t.sin()).round() as i64);
                Shape::Segment {
                    a: (cx - dx, cy - dy),
                    b: (cx + dx, cy + dy),
                    half_width: rng.random_range(1.0..3.0),
                }
            }
        }
    }
}

/// One fronto-parallel layer: a shape, its disparity and its texture.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub shape: Shape,
    pub disparity: u32,
    pub base: f64,
    pub texture_amplitude: f64,
    pub texture_seed: u64,
}

impl Layer {
    /// Intensity at integer layer coordinates (left-view pixel grid).
    pub fn intensity(&self, x: i64, y: i64) -> f64 {
        if self.texture_amplitude == 0.0 {
            return self.base.clamp(0.0, 1.0);
        }
        let fine = hash_unit(x, y, self.texture_seed);
        let coarse = hash_unit(x.div_euclid(4), y.div_euclid(4), self.texture_seed ^ 0x9e37_79b9);
        let n = 0.5 * fine + 0.5 * coarse - 0.5;
        (self.base + self.texture_amplitude * n).clamp(0.0, 1.0)
    }
}

fn hash_unit(x: i64, y: i64, seed: u64) -> f64 {
    let mut z = seed
        ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn cross(a: (i64, i64), b: (i64, i64), p: (i64, i64)) -> i64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

fn polygon_area2(v: &[(i64, i64)]) -> i64 {
    (0..v.len())
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<i64>()
        .abs()
}

/// Monotone-chain hull without collinear points, ordered so that
/// `cross(v[i], v[i+1], p) >= 0` for interior `p`.
fn convex_hull(mut pts: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn segment_distance(p: (f64, f64), a: (i64, i64), b: (i64, i64)) -> f64 {
    let (ax, ay) = (a.0 as f64, a.1 as f64);
    let (bx, by) = (b.0 as f64, b.1 as f64);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - ax) * dx + (p.1 - ay) * dy) / len2).clamp(0.0, 1.0)
    };
    ((p.0 - ax - t * dx).powi(2) + (p.1 - ay - t * dy).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_orientation_covers_interior_and_vertices() {
        let s = Shape::polygon(vec![(0, 0), (10, 0), (10, 10), (0, 10), (5, 5)]);
        assert_eq!(s.vertices().len(), 4);
        for (x, y) in s.vertices() {
            assert!(s.covers(x, y));
        }
        assert!(s.covers(5, 5));
        assert!(!s.covers(11, 5));
        assert!(!s.covers(-1, 0));
    }

    #[test]
    fn segment_covers_endpoints() {
        let s = Shape::Segment {
            a: (2, 2),
            b: (9, 6),
            half_width: 1.0,
        };
        assert!(s.covers(2, 2) && s.covers(9, 6));
        assert!(!s.covers(2, 9));
    }
}
