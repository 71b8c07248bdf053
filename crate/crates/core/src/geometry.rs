//! Oriented 3D boxes and exact rotated-box IoU.
//!
//! Boxes are upright (yaw only), so the 3D intersection factors into the
//! bird's-eye-view overlap of the two footprints times the overlap of their
//! vertical extents. Footprint overlap is computed by clipping one convex
//! polygon against the other.

use std::cmp::Ordering;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Vertex classification tolerance for polygon clipping, in meters.
pub const CLIP_TOLERANCE: f64 = 1e-9;
/// Intersections with smaller area (square meters) are reported as empty.
pub const SLIVER_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("{field} must be finite, got {value}")]
    NonFinite { field: &'static str, value: f64 },
    #[error("{field} must be positive, got {value}")]
    NonPositiveDimension { field: &'static str, value: f64 },
    #[error("polygon needs at least 3 distinct vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon is not convex")]
    NotConvex,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Vec3<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Self) -> Self {
        Self::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Unit vector in the same direction, or `None` for a zero-length vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        (n > T::zero()).then(|| self * n.recip())
    }
}

impl<T: Scalar> Add for Vec3<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl<T: Scalar> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl<T: Scalar> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }
}

impl<T: Scalar> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn normalize_heading<T: Scalar>(heading: T) -> T {
    let two_pi = T::TAU();
    let mut h = heading - two_pi * ((heading + T::PI()) / two_pi).floor();
    // rounding can land exactly on either end of the interval
    if h >= T::PI() {
        h = h - two_pi;
    }
    if h < -T::PI() {
        h = h + two_pi;
    }
    h
}

/// Upright 7-DOF box. Dimensions are along the box-local x (length),
/// y (width) and z (height) axes; `heading` is the yaw about +z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D<T> {
    center: Vec3<T>,
    length: T,
    width: T,
    height: T,
    heading: T,
}

impl<T: Scalar> Box3D<T> {
    pub fn new(center: Vec3<T>, length: T, width: T, height: T, heading: T) -> Result<Self, GeometryError> {
        let finite = |field, v: T| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(GeometryError::NonFinite { field, value: v.as_f64() })
            }
        };
        finite("center.x", center.x)?;
        finite("center.y", center.y)?;
        finite("center.z", center.z)?;
        finite("heading", heading)?;
        for (field, v) in [("length", length), ("width", width), ("height", height)] {
            finite(field, v)?;
            if v <= T::zero() {
                return Err(GeometryError::NonPositiveDimension { field, value: v.as_f64() });
            }
        }
        Ok(Self { center, length, width, height, heading: normalize_heading(heading) })
    }

    pub fn center(&self) -> Vec3<T> {
        self.center
    }
    pub fn length(&self) -> T {
        self.length
    }
    pub fn width(&self) -> T {
        self.width
    }
    pub fn height(&self) -> T {
        self.height
    }
    /// Yaw in `[-π, π)`.
    pub fn heading(&self) -> T {
        self.heading
    }

    /// Same box moved to a new center. Finite centers keep the invariants.
    pub fn with_center(&self, center: Vec3<T>) -> Self {
        debug_assert!(center.is_finite());
        Self { center, ..*self }
    }

    pub fn translated(&self, offset: Vec3<T>) -> Self {
        self.with_center(self.center + offset)
    }

    pub fn volume(&self) -> T {
        self.length * self.width * self.height
    }

    pub fn bottom(&self) -> T {
        self.center.z - self.height * T::lit(0.5)
    }

    pub fn top(&self) -> T {
        self.center.z + self.height * T::lit(0.5)
    }

    /// Total order on the raw fields; used to evaluate pairwise quantities in
    /// a canonical argument order.
    fn field_cmp(&self, other: &Self) -> Ordering {
        let a = [self.center.x, self.center.y, self.center.z, self.length, self.width, self.height, self.heading];
        let b = [other.center.x, other.center.y, other.center.z, other.length, other.width, other.height, other.heading];
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    pub const fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }

    fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    fn dist(self, o: Self) -> T {
        let d = self.sub(o);
        (d.x * d.x + d.y * d.y).sqrt()
    }
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon2D<T> {
    vertices: Vec<Point2<T>>,
}

impl<T: Scalar> ConvexPolygon2D<T> {
    /// Builds a polygon from vertices in either winding. Repeated vertices
    /// (within [`CLIP_TOLERANCE`]) are dropped and the result is stored CCW.
    pub fn new(vertices: Vec<Point2<T>>) -> Result<Self, GeometryError> {
        let mut vertices = dedup_ring(vertices);
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        if signed_area(&vertices) < T::zero() {
            vertices.reverse();
        }
        let tol = T::lit(CLIP_TOLERANCE);
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            let edge = b.sub(a);
            let len = a.dist(b);
            if edge.cross(c.sub(b)) < -tol * len {
                return Err(GeometryError::NotConvex);
            }
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point2<T>] {
        &self.vertices
    }

    pub fn area(&self) -> T {
        signed_area(&self.vertices).abs()
    }

    /// Intersection with another convex polygon, or `None` when the overlap
    /// is empty or a sliver below [`SLIVER_AREA`].
    pub fn intersection(&self, other: &Self) -> Option<Self> {
        let clipped = clip_convex(&self.vertices, &other.vertices);
        let mut vertices = dedup_ring(clipped);
        if vertices.len() < 3 {
            return None;
        }
        let area = signed_area(&vertices);
        if area.abs() < T::lit(SLIVER_AREA) {
            return None;
        }
        if area < T::zero() {
            vertices.reverse();
        }
        Some(Self { vertices })
    }
}

fn signed_area<T: Scalar>(vertices: &[Point2<T>]) -> T {
    let n = vertices.len();
    let mut twice = T::zero();
    for i in 0..n {
        twice = twice + vertices[i].cross(vertices[(i + 1) % n]);
    }
    twice * T::lit(0.5)
}

fn dedup_ring<T: Scalar>(vertices: Vec<Point2<T>>) -> Vec<Point2<T>> {
    let tol = T::lit(CLIP_TOLERANCE);
    let mut out: Vec<Point2<T>> = Vec::with_capacity(vertices.len());
    for p in vertices {
        if out.last().is_none_or(|q| q.dist(p) > tol) {
            out.push(p);
        }
    }
    while out.len() > 1 && out[0].dist(out[out.len() - 1]) <= tol {
        out.pop();
    }
    out
}

/// Sutherland-Hodgman: clips `subject` against every edge of the CCW `clip`.
fn clip_convex<T: Scalar>(subject: &[Point2<T>], clip: &[Point2<T>]) -> Vec<Point2<T>> {
    let tol = T::lit(CLIP_TOLERANCE);
    let mut output = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let edge = b.sub(a);
        let len = a.dist(b);
        if len <= tol {
            continue;
        }
        // signed distance to the edge line, positive on the inner (left) side
        let dist = |p: Point2<T>| edge.cross(p.sub(a)) / len;
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let next = input[(j + 1) % m];
            let d_cur = dist(cur);
            let d_next = dist(next);
            let cur_in = d_cur >= -tol;
            let next_in = d_next >= -tol;
            if cur_in {
                output.push(cur);
            }
            if cur_in != next_in {
                let t = (d_cur / (d_cur - d_next)).max(T::zero()).min(T::one());
                output.push(Point2::new(cur.x + (next.x - cur.x) * t, cur.y + (next.y - cur.y) * t));
            }
        }
    }
    output
}

/// Ground-plane rectangle of `b`, counter-clockwise.
pub fn bev_footprint<T: Scalar>(b: &Box3D<T>) -> ConvexPolygon2D<T> {
    let half_l = b.length * T::lit(0.5);
    let half_w = b.width * T::lit(0.5);
    let (sin, cos) = b.heading.sin_cos();
    let c = b.center;
    let vertices = [(half_l, -half_w), (half_l, half_w), (-half_l, half_w), (-half_l, -half_w)]
        .into_iter()
        .map(|(lx, ly)| Point2::new(c.x + lx * cos - ly * sin, c.y + lx * sin + ly * cos))
        .collect();
    ConvexPolygon2D { vertices }
}

/// Area of the intersection of two convex polygons (square meters).
pub fn convex_intersection_area<T: Scalar>(a: &ConvexPolygon2D<T>, b: &ConvexPolygon2D<T>) -> T {
    a.intersection(b).map_or(T::zero(), |p| p.area())
}

/// Overlap of the vertical extents, clamped at zero.
fn vertical_overlap<T: Scalar>(a: &Box3D<T>, b: &Box3D<T>) -> T {
    (a.top().min(b.top()) - a.bottom().max(b.bottom())).max(T::zero())
}

/// Intersection volume of two upright boxes.
pub fn intersection_volume<T: Scalar>(a: &Box3D<T>, b: &Box3D<T>) -> T {
    let (a, b) = if a.field_cmp(b).is_le() { (a, b) } else { (b, a) };
    let dz = vertical_overlap(a, b);
    if dz <= T::zero() {
        return T::zero();
    }
    // circumscribed circles are disjoint
    let reach = ((a.length * a.length + a.width * a.width).sqrt()
        + (b.length * b.length + b.width * b.width).sqrt())
        * T::lit(0.5);
    let dx = a.center.x - b.center.x;
    let dy = a.center.y - b.center.y;
    if dx * dx + dy * dy >= reach * reach {
        return T::zero();
    }
    convex_intersection_area(&bev_footprint(a), &bev_footprint(b)) * dz
}

/// 3D intersection over union of two upright boxes, in `[0, 1]`.
pub fn iou_3d<T: Scalar>(a: &Box3D<T>, b: &Box3D<T>) -> T {
    if a == b {
        return T::one();
    }
    let inter = intersection_volume(a, b);
    if inter <= T::zero() {
        return T::zero();
    }
    let union = a.volume() + b.volume() - inter;
    (inter / union).max(T::zero()).min(T::one())
}
