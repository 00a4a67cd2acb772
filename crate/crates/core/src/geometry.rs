//! Closed-form 2D line geometry and the pinhole camera model.
//!
//! Image coordinates are continuous: pixel `(row, col)` has its center at
//! `Point2 { x: col + 0.5, y: row + 0.5 }` (see [`pixel_center`]).

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest direction norm accepted by routines that normalize a direction.
pub const EPS_NORM: f64 = 1e-8;

/// Two lines whose normalized cross product is below this are treated as parallel.
pub const EPS_PARALLEL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Vector from `self` to `to`.
    pub fn to(self, to: Point2) -> Direction2 {
        Direction2::new(to.x - self.x, to.y - self.y)
    }

    pub fn offset(self, d: Direction2, t: f64) -> Point2 {
        Point2::new(self.x + t * d.x, self.y + t * d.y)
    }
}

/// A 2D direction estimate. Not necessarily unit length.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Direction2 {
    pub x: f64,
    pub y: f64,
}

impl Direction2 {
    pub const ZERO: Direction2 = Direction2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Direction2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Direction2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn scale(self, c: f64) -> Direction2 {
        Direction2::new(self.x * c, self.y * c)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn normalized(self) -> Option<Direction2> {
        let n = self.norm();
        (n >= EPS_NORM).then(|| self.scale(1.0 / n))
    }

    /// Rotates counter-clockwise (in x-right / y-down image axes this is clockwise on screen).
    pub fn rotated(self, angle: f64) -> Direction2 {
        let (s, c) = angle.sin_cos();
        Direction2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl std::ops::Neg for Direction2 {
    type Output = Direction2;
    fn neg(self) -> Direction2 {
        Direction2::new(-self.x, -self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn distance(self, other: Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Rigid transform from object coordinates to camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

const ROTATION_TOL: f64 = 1e-9;

impl Pose {
    /// Builds a pose, checking that `rotation` is a proper rotation within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if !(ortho <= ROTATION_TOL && (det - 1.0).abs() <= ROTATION_TOL) {
            return Err(Error::DegenerateInput("rotation is not orthonormal with det +1"));
        }
        if !translation.iter().all(|t| t.is_finite()) {
            return Err(Error::DegenerateInput("non-finite translation"));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Axis-angle rotation (vector direction = axis, norm = angle) plus translation.
    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: Rotation3::new(axis_angle).into_inner(),
            translation,
        }
    }

    pub fn transform(&self, p: Point3) -> Vector3<f64> {
        self.rotation * p.to_vector() + self.translation
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Geodesic angle in radians between the two rotations.
    pub fn rotation_error(&self, other: &Pose) -> f64 {
        let r = self.rotation.transpose() * other.rotation;
        // The trace formula loses precision near zero; the skew part does not.
        let skew = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
        let s = 0.5 * skew.norm();
        let c = 0.5 * (r.trace() - 1.0);
        s.atan2(c)
    }

    /// ‖t_self − t_other‖ / ‖t_other‖.
    pub fn relative_translation_error(&self, reference: &Pose) -> f64 {
        (self.translation - reference.translation).norm() / reference.translation.norm()
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && cx.is_finite() && cy.is_finite()) {
            return Err(Error::DegenerateInput("focal lengths must be positive"));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Projects a camera-frame point.
    pub fn project_camera(&self, pc: &Vector3<f64>) -> Result<Point2> {
        if !(pc.z > 0.0) {
            return Err(Error::BehindCamera { depth: pc.z });
        }
        Ok(Point2::new(
            self.fx * pc.x / pc.z + self.cx,
            self.fy * pc.y / pc.z + self.cy,
        ))
    }
}

/// Center of pixel `(row, col)`.
pub fn pixel_center(row: usize, col: usize) -> Point2 {
    Point2::new(col as f64 + 0.5, row as f64 + 0.5)
}

/// Unit vector pointing from `p` toward `k`.
pub fn unit_direction(p: Point2, k: Point2) -> Result<Direction2> {
    let d = p.to(k);
    let n = d.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::DegenerateInput("pixel coincides with keypoint"));
    }
    Ok(d.scale(1.0 / n))
}

fn check_direction(v: Direction2) -> Result<f64> {
    let n = v.norm();
    if n < EPS_NORM || !n.is_finite() {
        return Err(Error::DegenerateDirection { norm: n, min: EPS_NORM });
    }
    Ok(n)
}

/// Signed numerator of the point-line distance:
/// `v.y·k.x − v.x·k.y + v.x·p.y − v.y·p.x`.
#[inline]
pub fn line_residual(p: Point2, v: Direction2, k: Point2) -> f64 {
    v.y * k.x - v.x * k.y + v.x * p.y - v.y * p.x
}

/// Perpendicular distance from `k` to the line through `p` with direction `v`.
pub fn point_line_distance(p: Point2, v: Direction2, k: Point2) -> Result<f64> {
    let n = check_direction(v)?;
    Ok(line_residual(p, v, k).abs() / n)
}

/// Point on the line through `p` along `v` closest to `k`.
pub fn foot_of_perpendicular(p: Point2, v: Direction2, k: Point2) -> Result<Point2> {
    let n = check_direction(v)?;
    let t = p.to(k).dot(v) / (n * n);
    Ok(p.offset(v, t))
}

/// Intersection of the infinite lines `p1 + t·v1` and `p2 + s·v2`, or `None`
/// when they are (nearly) parallel.
pub fn ray_intersection(p1: Point2, v1: Direction2, p2: Point2, v2: Direction2) -> Option<Point2> {
    let n1 = v1.norm();
    let n2 = v2.norm();
    if n1 < EPS_NORM || n2 < EPS_NORM {
        return None;
    }
    let c = v1.cross(v2);
    if !(c.abs() / (n1 * n2) >= EPS_PARALLEL) {
        return None;
    }
    let t = p1.to(p2).cross(v2) / c;
    let h = p1.offset(v1, t);
    h.is_finite().then_some(h)
}

/// Pinhole projection of an object-frame point.
pub fn project(pose: &Pose, intr: &Intrinsics, x: Point3) -> Result<Point2> {
    intr.project_camera(&pose.transform(x))
}
