//! Verification instruments for the bedwatch test suites.
//!
//! Everything in this crate is an independent oracle: it re-derives expected
//! values by brute force (grid rasterization, naive window filters, empirical
//! statistics) without touching the implementation paths it checks. It is a
//! dev-dependency only and never ships with the toolkit.

use bedwatch_core::geometry::{ConvexPolygon, OrientedBox, Point};
use bedwatch_core::raster::Frame;
use rand::Rng;

/// Grid estimate of the intersection area of two oriented boxes.
///
/// Lays a `resolution x resolution` grid of cells over the joint bounding
/// rectangle of both boxes and counts cells whose centers lie inside both
/// rectangles, scaled by the cell area. Row intervals are solved in closed
/// form, which makes the count identical to the dense double loop (see
/// [`rasterized_intersection_area_dense`]) at a fraction of the cost.
pub fn rasterized_intersection_area(a: &OrientedBox, b: &OrientedBox, resolution: u32) -> f64 {
    assert!(resolution >= 256, "oracle resolution must be at least 256");
    let (min, max) = joint_bounds(a, b);
    let cell_w = (max.x - min.x) / f64::from(resolution);
    let cell_h = (max.y - min.y) / f64::from(resolution);
    if cell_w <= 0.0 || cell_h <= 0.0 {
        return 0.0;
    }
    let ca = RowConstraints::new(a);
    let cb = RowConstraints::new(b);
    let mut count: u64 = 0;
    for row in 0..resolution {
        let y = min.y + (f64::from(row) + 0.5) * cell_h;
        let (mut lo, mut hi) = match ca.x_interval(y) {
            Some(iv) => iv,
            None => continue,
        };
        match cb.x_interval(y) {
            Some((lo2, hi2)) => {
                lo = lo.max(lo2);
                hi = hi.min(hi2);
            }
            None => continue,
        }
        if hi < lo {
            continue;
        }
        // Cell centers x_k = min.x + (k + 0.5) cell_w for k in [0, resolution).
        let k_min = ((lo - min.x) / cell_w - 0.5).ceil().max(0.0) as i64;
        let k_max = ((hi - min.x) / cell_w - 0.5).floor().min(f64::from(resolution - 1)) as i64;
        if k_max >= k_min {
            count += (k_max - k_min + 1) as u64;
        }
    }
    count as f64 * cell_w * cell_h
}

/// Dense double-loop version of the grid count, kept as the reference for
/// the scanline oracle itself. Quadratic in `resolution`.
pub fn rasterized_intersection_area_dense(a: &OrientedBox, b: &OrientedBox, resolution: u32) -> f64 {
    let (min, max) = joint_bounds(a, b);
    let cell_w = (max.x - min.x) / f64::from(resolution);
    let cell_h = (max.y - min.y) / f64::from(resolution);
    if cell_w <= 0.0 || cell_h <= 0.0 {
        return 0.0;
    }
    let mut count: u64 = 0;
    for row in 0..resolution {
        let y = min.y + (f64::from(row) + 0.5) * cell_h;
        for col in 0..resolution {
            let x = min.x + (f64::from(col) + 0.5) * cell_w;
            let p = Point::new(x, y);
            if a.contains(p) && b.contains(p) {
                count += 1;
            }
        }
    }
    count as f64 * cell_w * cell_h
}

/// IoU derived from the grid oracle.
pub fn oracle_iou(a: &OrientedBox, b: &OrientedBox, resolution: u32) -> f64 {
    let inter = rasterized_intersection_area(a, b, resolution);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Grid estimate of the intersection area of two convex polygons, used to
/// check the clipper on shapes that are not rectangles.
pub fn rasterized_polygon_intersection_area(a: &ConvexPolygon, b: &ConvexPolygon, resolution: u32) -> f64 {
    let pts: Vec<Point> = a.vertices().iter().chain(b.vertices().iter()).copied().collect();
    if pts.is_empty() {
        return 0.0;
    }
    let min_x = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let max_x = pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let max_y = pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let cell_w = (max_x - min_x) / f64::from(resolution);
    let cell_h = (max_y - min_y) / f64::from(resolution);
    if cell_w <= 0.0 || cell_h <= 0.0 {
        return 0.0;
    }
    let mut count: u64 = 0;
    for row in 0..resolution {
        let y = min_y + (f64::from(row) + 0.5) * cell_h;
        for col in 0..resolution {
            let x = min_x + (f64::from(col) + 0.5) * cell_w;
            let p = Point::new(x, y);
            if convex_contains(a, p) && convex_contains(b, p) {
                count += 1;
            }
        }
    }
    count as f64 * cell_w * cell_h
}

fn convex_contains(poly: &ConvexPolygon, p: Point) -> bool {
    let vs = poly.vertices();
    if vs.len() < 3 {
        return false;
    }
    for (i, a) in vs.iter().enumerate() {
        let b = &vs[(i + 1) % vs.len()];
        if (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) < 0.0 {
            return false;
        }
    }
    true
}

fn joint_bounds(a: &OrientedBox, b: &OrientedBox) -> (Point, Point) {
    let (amin, amax) = a.aabb();
    let (bmin, bmax) = b.aabb();
    (
        Point::new(amin.x.min(bmin.x), amin.y.min(bmin.y)),
        Point::new(amax.x.max(bmax.x), amax.y.max(bmax.y)),
    )
}

/// Per-row x-intervals of an oriented box: each of the two half-extent
/// constraints is linear in x once y is fixed.
struct RowConstraints {
    cx: f64,
    cy: f64,
    hw: f64,
    hh: f64,
    sin: f64,
    cos: f64,
}

impl RowConstraints {
    fn new(b: &OrientedBox) -> Self {
        let (sin, cos) = b.theta().sin_cos();
        Self { cx: b.cx(), cy: b.cy(), hw: b.width() / 2.0, hh: b.height() / 2.0, sin, cos }
    }

    fn x_interval(&self, y: f64) -> Option<(f64, f64)> {
        let dy = y - self.cy;
        // u = (x - cx) cos + dy sin must lie in [-hw, hw]
        let (lo_u, hi_u) = interval_of(self.cos, dy * self.sin, self.hw, self.cx)?;
        // v = -(x - cx) sin + dy cos must lie in [-hh, hh]
        let (lo_v, hi_v) = interval_of(-self.sin, dy * self.cos, self.hh, self.cx)?;
        let lo = lo_u.max(lo_v);
        let hi = hi_u.min(hi_v);
        (hi >= lo).then_some((lo, hi))
    }
}

/// Solve `|a (x - x0) + b| <= c` for x.
fn interval_of(a: f64, b: f64, c: f64, x0: f64) -> Option<(f64, f64)> {
    if a.abs() < 1e-300 {
        return (b.abs() <= c).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let lo = (-c - b) / a + x0;
    let hi = (c - b) / a + x0;
    Some(if a > 0.0 { (lo, hi) } else { (hi, lo) })
}

/// Random oriented box with sides in `[1, 200]`, centers in `[-120, 120]`
/// and the full angle range, matching the distribution used by the oracle
/// agreement suites.
pub fn random_box<R: Rng>(rng: &mut R) -> OrientedBox {
    OrientedBox::new(
        rng.gen_range(-120.0..120.0),
        rng.gen_range(-120.0..120.0),
        rng.gen_range(1.0..=200.0),
        rng.gen_range(1.0..=200.0),
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
    .expect("random box parameters are always valid")
}

/// Naive separable box blur: direct window means per row then per column,
/// rounding half up at each 1-D division, borders replicated. Quadratic in
/// the radius; intended for frames no larger than a few dozen pixels.
pub fn naive_separable_box_blur(frame: &Frame, radius: u32, passes: u32) -> Frame {
    let w = frame.width() as i64;
    let h = frame.height() as i64;
    let ch = frame.channels() as i64;
    let r = radius as i64;
    let window = 2 * r as u64 + 1;
    let mut data = frame.data().to_vec();
    let sample = |buf: &[u8], x: i64, y: i64, c: i64| -> u64 {
        let xc = x.clamp(0, w - 1);
        let yc = y.clamp(0, h - 1);
        u64::from(buf[((yc * w + xc) * ch + c) as usize])
    };
    for _ in 0..passes {
        let mut horiz = data.clone();
        for y in 0..h {
            for x in 0..w {
                for c in 0..ch {
                    let mut sum = 0u64;
                    for dx in -r..=r {
                        sum += sample(&data, x + dx, y, c);
                    }
                    horiz[((y * w + x) * ch + c) as usize] = ((sum + window / 2) / window) as u8;
                }
            }
        }
        let mut vert = horiz.clone();
        for y in 0..h {
            for x in 0..w {
                for c in 0..ch {
                    let mut sum = 0u64;
                    for dy in -r..=r {
                        sum += sample(&horiz, x, y + dy, c);
                    }
                    vert[((y * w + x) * ch + c) as usize] = ((sum + window / 2) / window) as u8;
                }
            }
        }
        data = vert;
    }
    Frame::new(frame.width(), frame.height(), frame.channels(), data, frame.index()).unwrap()
}

/// Kolmogorov-Smirnov statistic of `samples` against the uniform
/// distribution on `[lo, hi]`.
pub fn ks_statistic_uniform(samples: &[f64], lo: f64, hi: f64) -> f64 {
    assert!(!samples.is_empty() && hi > lo);
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        let emp_lo = i as f64 / n;
        let emp_hi = (i as f64 + 1.0) / n;
        d = d.max((cdf - emp_lo).abs()).max((emp_hi - cdf).abs());
    }
    d
}
