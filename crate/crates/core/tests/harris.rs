use icgnet::grid::Grid;
use icgnet::interest::{nms_filter, Detector, HarrisDetector};

/// Bright quadrant with its corner at (32, 32).
fn l_junction() -> Grid<f64> {
    Grid::from_fn(64, 64, |x, y| if x >= 32 && y >= 32 { 1.0 } else { 0.0 })
}

/// Structure tensor at `(x0, y0)` by direct 2D Gaussian-weighted summation,
/// then the response from its eigenvalues.
fn eigen_response(img: &Grid<f64>, x0: usize, y0: usize, sigma: f64, k: f64) -> f64 {
    let at = |x: i64, y: i64| *img.get(x.clamp(0, 63) as usize, y.clamp(0, 63) as usize);
    let grad = |x: i64, y: i64| {
        let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
        let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        (gx / 8.0, gy / 8.0)
    };
    let r = (2.0 * sigma).ceil() as i64;
    let (mut a, mut b, mut c, mut wsum) = (0.0, 0.0, 0.0, 0.0);
    for dy in -r..=r {
        for dx in -r..=r {
            let wgt = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            let (gx, gy) = grad(x0 as i64 + dx, y0 as i64 + dy);
            a += wgt * gx * gx;
            b += wgt * gy * gy;
            c += wgt * gx * gy;
            wsum += wgt;
        }
    }
    let (a, b, c) = (a / wsum, b / wsum, c / wsum);
    let mean = 0.5 * (a + b);
    let disc = (0.25 * (a - b) * (a - b) + c * c).sqrt();
    let (l1, l2) = (mean + disc, mean - disc);
    l1 * l2 - k * (l1 + l2) * (l1 + l2)
}

#[test]
fn response_matches_eigenvalue_oracle() {
    let img = l_junction();
    let det = HarrisDetector::default();
    let resp = det.response(&img);
    for &(x, y) in &[(32, 32), (31, 31), (30, 33), (40, 32), (10, 10)] {
        let want = eigen_response(&img, x, y, det.sigma, det.k);
        let got = *resp.get(x, y);
        assert!((got - want).abs() <= 1e-9 * want.abs().max(1e-6), "({x},{y}): {got} vs {want}");
    }
}

#[test]
fn strongest_corner_is_at_the_junction() {
    let det = HarrisDetector::default();
    let map = det.detect(&l_junction(), None);
    let pts = nms_filter(&map, 4, 0.015, 8).unwrap();
    let (x, y) = pts.coords()[0];
    assert!((x - 32.0).abs() <= 1.0 && (y - 32.0).abs() <= 1.0, "peak at ({x},{y})");
    // Straight edges away from the junction score below the corner.
    assert!(pts.scores()[0] == 1.0);
}
