//! Oriented rectangles, convex polygon clipping and exact rotated IoU.
//!
//! Conventions used throughout the toolkit:
//!
//! * Coordinates are pixels in image space (x right, y down).
//! * `theta` is the rotation of the box width axis measured from the +x axis
//!   toward +y, normalized to `[-pi/2, pi/2)`. Rectangles have pi symmetry,
//!   so the canonical range makes equality testable.
//! * Polygons are ordered counter-clockwise in the shoelace sense (positive
//!   signed area on the raw coordinates).
//!
//! All types are immutable values and every operation is a pure function.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

/// Points closer than this (in pixels) to a clip edge count as inside,
/// which keeps shared edges from flickering vertices in and out.
const CLIP_EDGE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box extent must be positive and finite, got w={w}, h={h}")]
    InvalidExtent { w: f64, h: f64 },
    #[error("box center and angle must be finite")]
    NonFinite,
    #[error("corner list does not describe a rectangle")]
    NotARectangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Rotated rectangle: center, size and width-axis angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct OrientedBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    theta: f64,
}

/// Serde mirror of [`OrientedBox`] so deserialized boxes still go through
/// invariant checks.
#[derive(Serialize, Deserialize)]
struct RawBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    theta: f64,
}

impl TryFrom<RawBox> for OrientedBox {
    type Error = GeometryError;
    fn try_from(raw: RawBox) -> Result<Self, GeometryError> {
        OrientedBox::new(raw.cx, raw.cy, raw.w, raw.h, raw.theta)
    }
}

impl From<OrientedBox> for RawBox {
    fn from(b: OrientedBox) -> Self {
        RawBox { cx: b.cx, cy: b.cy, w: b.w, h: b.h, theta: b.theta }
    }
}

/// Wrap an angle into `[-pi/2, pi/2)` modulo pi.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut t = (theta + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    // rem_euclid can land exactly on the modulus for tiny negative inputs.
    if t >= FRAC_PI_2 {
        t -= PI;
    }
    t
}

impl OrientedBox {
    /// Degenerate extents are data errors and are rejected rather than clamped.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Result<Self, GeometryError> {
        if !(cx.is_finite() && cy.is_finite() && theta.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if !(w.is_finite() && h.is_finite()) || w <= 0.0 || h <= 0.0 {
            return Err(GeometryError::InvalidExtent { w, h });
        }
        Ok(Self { cx, cy, w, h, theta: normalize_angle(theta) })
    }

    /// Fit a box to four rectangle corners in CCW order.
    ///
    /// The inverse of [`corners`](Self::corners) up to the
    /// `(w, h, theta) <-> (h, w, theta +/- pi/2)` symmetry.
    pub fn from_corners(corners: &[Point; 4]) -> Result<Self, GeometryError> {
        let cx = corners.iter().map(|p| p.x).sum::<f64>() / 4.0;
        let cy = corners.iter().map(|p| p.y).sum::<f64>() / 4.0;
        let e1 = Point::new(corners[1].x - corners[0].x, corners[1].y - corners[0].y);
        let e2 = Point::new(corners[2].x - corners[1].x, corners[2].y - corners[1].y);
        let w = (e1.x * e1.x + e1.y * e1.y).sqrt();
        let h = (e2.x * e2.x + e2.y * e2.y).sqrt();
        if w <= 0.0 || h <= 0.0 {
            return Err(GeometryError::NotARectangle);
        }
        // Opposite edges of a rectangle must close up.
        let e3 = Point::new(corners[3].x - corners[2].x, corners[3].y - corners[2].y);
        if (e1.x + e3.x).abs() > 1e-6 * (1.0 + w) || (e1.y + e3.y).abs() > 1e-6 * (1.0 + w) {
            return Err(GeometryError::NotARectangle);
        }
        Self::new(cx, cy, w, h, e1.y.atan2(e1.x))
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    pub fn width(&self) -> f64 {
        self.w
    }

    pub fn height(&self) -> f64 {
        self.h
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Same box translated by `(dx, dy)`; size and angle unchanged.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self { cx: self.cx + dx, cy: self.cy + dy, ..*self }
    }

    /// The four corners in CCW order. The polygon area equals `w * h`.
    pub fn corners(&self) -> ConvexPolygon {
        let (s, c) = self.theta.sin_cos();
        let hw = self.w / 2.0;
        let hh = self.h / 2.0;
        let local = [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)];
        ConvexPolygon::new(
            local
                .iter()
                .map(|&(u, v)| Point::new(self.cx + u * c - v * s, self.cy + u * s + v * c))
                .collect(),
        )
    }

    /// Boundary-inclusive point containment.
    pub fn contains(&self, p: Point) -> bool {
        let (s, c) = self.theta.sin_cos();
        let dx = p.x - self.cx;
        let dy = p.y - self.cy;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        u.abs() <= self.w / 2.0 && v.abs() <= self.h / 2.0
    }

    /// Axis-aligned bounding rectangle as `(min, max)` corners.
    pub fn aabb(&self) -> (Point, Point) {
        let poly = self.corners();
        let xs = poly.vertices().iter().map(|p| p.x);
        let ys = poly.vertices().iter().map(|p| p.y);
        (
            Point::new(xs.clone().fold(f64::INFINITY, f64::min), ys.clone().fold(f64::INFINITY, f64::min)),
            Point::new(xs.fold(f64::NEG_INFINITY, f64::max), ys.fold(f64::NEG_INFINITY, f64::max)),
        )
    }
}

/// Convex polygon with CCW vertices. The empty vertex list is the empty
/// polygon; fewer than three vertices always has area zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Point>) -> Self {
        Self { vertices }
    }

    pub fn empty() -> Self {
        Self { vertices: Vec::new() }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Shoelace area; non-negative for CCW input, zero when degenerate.
    pub fn area(&self) -> f64 {
        if self.vertices.len() < 3 {
            return 0.0;
        }
        let mut twice = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            let b = &self.vertices[(i + 1) % self.vertices.len()];
            twice += a.x * b.y - b.x * a.y;
        }
        (twice / 2.0).abs()
    }
}

/// Sutherland-Hodgman clip of one convex polygon by another.
///
/// Returns the convex intersection; empty when the inputs are disjoint.
/// Degenerate (near zero area) results are returned as-is and report area 0.
pub fn clip(subject: &ConvexPolygon, clipper: &ConvexPolygon) -> ConvexPolygon {
    if subject.is_empty() || clipper.is_empty() {
        return ConvexPolygon::empty();
    }
    let mut output = subject.vertices.clone();
    let cv = &clipper.vertices;
    for i in 0..cv.len() {
        if output.is_empty() {
            break;
        }
        let a = cv[i];
        let b = cv[(i + 1) % cv.len()];
        let ex = b.x - a.x;
        let ey = b.y - a.y;
        let edge_len = (ex * ex + ey * ey).sqrt();
        let tol = -CLIP_EDGE_EPS * edge_len;
        // Interior of a CCW clipper is to the left of each directed edge.
        let inside = |p: &Point| ex * (p.y - a.y) - ey * (p.x - a.x) >= tol;

        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let prev = &input[(j + input.len() - 1) % input.len()];
            let cur = &input[j];
            match (inside(prev), inside(cur)) {
                (true, true) => output.push(*cur),
                (true, false) => output.push(line_intersection(prev, cur, &a, &b)),
                (false, true) => {
                    output.push(line_intersection(prev, cur, &a, &b));
                    output.push(*cur);
                }
                (false, false) => {}
            }
        }
    }
    ConvexPolygon::new(output)
}

/// Intersection of segment `p1->p2` with the infinite line through `a->b`.
fn line_intersection(p1: &Point, p2: &Point, a: &Point, b: &Point) -> Point {
    let dx = p2.x - p1.x;
    let dy = p2.y - p1.y;
    let ex = b.x - a.x;
    let ey = b.y - a.y;
    let denom = dx * ey - dy * ex;
    if denom.abs() < f64::MIN_POSITIVE {
        // Parallel within rounding; either endpoint is on the edge.
        return *p1;
    }
    let t = ((a.x - p1.x) * ey - (a.y - p1.y) * ex) / denom;
    Point::new(p1.x + t * dx, p1.y + t * dy)
}

/// Intersection-over-union of two oriented boxes, in `[0, 1]`.
///
/// The union is `area(a) + area(b) - intersection`. When both areas fall
/// below `1e-12` square pixels the result is 0 by convention.
pub fn iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    // Clip in a canonical operand order so iou(a, b) == iou(b, a) exactly.
    let (first, second) = if box_order(a, b) == Ordering::Greater { (b, a) } else { (a, b) };
    let pa = first.corners();
    let pb = second.corners();
    let area_a = pa.area();
    let area_b = pb.area();
    if area_a < 1e-12 && area_b < 1e-12 {
        return 0.0;
    }
    let inter = clip(&pa, &pb).area();
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

fn box_order(a: &OrientedBox, b: &OrientedBox) -> Ordering {
    let ka = [a.cx, a.cy, a.w, a.h, a.theta];
    let kb = [b.cx, b.cy, b.w, b.h, b.theta];
    for (x, y) in ka.iter().zip(kb.iter()) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(other) => return other,
        }
    }
    Ordering::Equal
}
