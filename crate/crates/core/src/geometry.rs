//! Rigid-body math shared by every stage of the pipeline.
//!
//! Quaternions are stored scalar-first `(w, x, y, z)`. Positions are meters,
//! timestamps are seconds on the source clock. Angles are radians internally;
//! conversion to degrees happens only at reporting and protocol boundaries.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::ops::Mul;

pub type Vec3 = Vector3<f64>;

/// Below this `|dot|` gap slerp falls back to normalized lerp.
pub const SLERP_LERP_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 4]> for Quat {
    fn from(c: [f64; 4]) -> Self {
        Quat { w: c[0], x: c[1], y: c[2], z: c[3] }
    }
}

impl From<Quat> for [f64; 4] {
    fn from(q: Quat) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Builds a quaternion from raw components and normalizes it.
    ///
    /// Returns `None` for a zero or non-finite input.
    pub fn new_normalized(w: f64, x: f64, y: f64, z: f64) -> Option<Quat> {
        let q = Quat { w, x, y, z };
        let n = q.norm();
        if !n.is_finite() || n < f64::EPSILON {
            return None;
        }
        Some(q.scaled(1.0 / n))
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Quat {
        let n = axis.norm();
        if n < f64::EPSILON {
            return Quat::IDENTITY;
        }
        let a = axis / n;
        let (s, c) = (0.5 * angle).sin_cos();
        Quat { w: c, x: a.x * s, y: a.y * s, z: a.z * s }
    }

    /// Rotation by the rotation vector `v` (axis * angle).
    pub fn from_rotation_vector(v: &Vec3) -> Quat {
        Quat::from_axis_angle(v, v.norm())
    }

    pub fn from_rotation_matrix(m: &Matrix3<f64>) -> Quat {
        let r = Rotation3::from_matrix_unchecked(*m);
        UnitQuaternion::from_rotation_matrix(&r).into()
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Quat {
        self.scaled(1.0 / self.norm())
    }

    fn scaled(&self, s: f64) -> Quat {
        Quat { w: self.w * s, x: self.x * s, y: self.y * s, z: self.z * s }
    }

    pub fn conjugate(&self) -> Quat {
        Quat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn negated(&self) -> Quat {
        self.scaled(-1.0)
    }

    pub fn dot(&self, o: &Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        // v' = v + 2w(u x v) + 2 u x (u x v)
        let u = self.vector();
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }

    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Rotation angle in `[0, pi]`, insensitive to quaternion sign.
    pub fn angle(&self) -> f64 {
        2.0 * self.vector().norm().atan2(self.w.abs())
    }

    /// Angle of the relative rotation between `self` and `other`.
    pub fn angle_to(&self, other: &Quat) -> f64 {
        (self.conjugate() * *other).angle()
    }

    /// Log map: rotation vector with angle in `[0, pi]`.
    pub fn to_rotation_vector(&self) -> Vec3 {
        let q = if self.w < 0.0 { self.negated() } else { *self };
        let s = q.vector().norm();
        if s < 1e-300 {
            return Vec3::zeros();
        }
        let angle = 2.0 * s.atan2(q.w);
        q.vector() * (angle / s)
    }

    /// Same rotation with `w >= 0`.
    pub fn canonical(&self) -> Quat {
        if self.w < 0.0 {
            self.negated()
        } else {
            *self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Mul for Quat {
    type Output = Quat;

    fn mul(self, b: Quat) -> Quat {
        let a = self;
        Quat {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        }
    }
}

impl From<UnitQuaternion<f64>> for Quat {
    fn from(q: UnitQuaternion<f64>) -> Self {
        Quat { w: q.w, x: q.i, y: q.j, z: q.k }
    }
}

impl From<Quat> for UnitQuaternion<f64> {
    fn from(q: Quat) -> Self {
        UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q.w, q.x, q.y, q.z))
    }
}

/// Spherical linear interpolation along the shortest arc.
pub fn slerp(a: &Quat, b: &Quat, t: f64) -> Quat {
    let mut b = *b;
    let mut d = a.dot(&b);
    if d < 0.0 {
        b = b.negated();
        d = -d;
    }
    if d > 1.0 - SLERP_LERP_THRESHOLD {
        let q = Quat {
            w: a.w + t * (b.w - a.w),
            x: a.x + t * (b.x - a.x),
            y: a.y + t * (b.y - a.y),
            z: a.z + t * (b.z - a.z),
        };
        return q.normalized();
    }
    let theta = d.min(1.0).acos();
    let s = theta.sin();
    let wa = ((1.0 - t) * theta).sin() / s;
    let wb = (t * theta).sin() / s;
    Quat {
        w: wa * a.w + wb * b.w,
        x: wa * a.x + wb * b.x,
        y: wa * a.y + wb * b.y,
        z: wa * a.z + wb * b.z,
    }
    .normalized()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Handedness {
    RightHanded,
    LeftHanded,
}

impl Handedness {
    pub fn other(self) -> Handedness {
        match self {
            Handedness::RightHanded => Handedness::LeftHanded,
            Handedness::LeftHanded => Handedness::RightHanded,
        }
    }
}

/// Position, orientation and source timestamp of a tracked body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
    pub timestamp: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        position: Vec3::new(0.0, 0.0, 0.0),
        orientation: Quat::IDENTITY,
        timestamp: 0.0,
    };

    pub fn new(position: Vec3, orientation: Quat, timestamp: f64) -> Pose {
        Pose { position, orientation, timestamp }
    }

    pub fn from_translation(position: Vec3) -> Pose {
        Pose { position, ..Pose::IDENTITY }
    }

    pub fn from_rotation(orientation: Quat) -> Pose {
        Pose { orientation, ..Pose::IDENTITY }
    }

    pub fn with_timestamp(mut self, timestamp: f64) -> Pose {
        self.timestamp = timestamp;
        self
    }

    /// `self` applied after `other`. The timestamp is taken from `other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.orientation.rotate(&other.position) + self.position,
            orientation: (self.orientation * other.orientation).normalized(),
            timestamp: other.timestamp,
        }
    }

    pub fn inverse(&self) -> Pose {
        let q = self.orientation.conjugate();
        Pose {
            position: -q.rotate(&self.position),
            orientation: q,
            timestamp: self.timestamp,
        }
    }

    pub fn transform_point(&self, v: &Vec3) -> Vec3 {
        self.orientation.rotate(v) + self.position
    }

    pub fn rotate_vector(&self, v: &Vec3) -> Vec3 {
        self.orientation.rotate(v)
    }

    /// Mirror across the xy-plane: the z axis flips between right- and
    /// left-handed frames. Its own inverse.
    pub fn convert_handedness(&self) -> Pose {
        let q = self.orientation;
        Pose {
            position: flip_z(&self.position),
            orientation: Quat { w: q.w, x: -q.x, y: -q.y, z: q.z },
            timestamp: self.timestamp,
        }
    }

    /// Rotation angle (radians) and translation distance to `other`.
    pub fn distance_to(&self, other: &Pose) -> (f64, f64) {
        (
            self.orientation.angle_to(&other.orientation),
            (self.position - other.position).norm(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
            && self.orientation.is_finite()
            && self.timestamp.is_finite()
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn invert(p: &Pose) -> Pose {
    p.inverse()
}

pub fn transform_point(p: &Pose, v: &Vec3) -> Vec3 {
    p.transform_point(v)
}

pub fn convert_handedness(p: &Pose) -> Pose {
    p.convert_handedness()
}

/// Point counterpart of [`convert_handedness`].
pub fn flip_z(v: &Vec3) -> Vec3 {
    Vec3::new(v.x, v.y, -v.z)
}

/// Rotation-vector counterpart of [`convert_handedness`]; rotation axes are
/// pseudovectors and pick up the determinant of the mirror.
pub fn flip_rotation_vector(v: &Vec3) -> Vec3 {
    Vec3::new(-v.x, -v.y, v.z)
}

/// Angle between two directions in radians.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Flip `v` so its largest-magnitude component is positive; ties resolve in
/// x, y, z order.
pub fn canonical_direction(v: &Vec3) -> Vec3 {
    let mut idx = 0;
    for i in 1..3 {
        if v[i].abs() > v[idx].abs() {
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        -v
    } else {
        *v
    }
}

pub fn deg(rad: f64) -> f64 {
    rad.to_degrees()
}

pub fn rad(deg: f64) -> f64 {
    deg.to_radians()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn rot_z(angle: f64) -> Quat {
        Quat::from_axis_angle(&Vec3::z(), angle)
    }

    fn same_rotation(a: &Quat, b: &Quat, tol: f64) -> bool {
        a.angle_to(b) < tol
    }

    #[test]
    fn identity_composition() {
        let p = Pose::new(Vec3::new(1.0, -2.0, 0.5), rot_z(0.3), 4.0);
        let r = Pose::IDENTITY.compose(&p);
        assert!((r.position - p.position).norm() < 1e-15);
        assert!(same_rotation(&r.orientation, &p.orientation, 1e-12));
        assert_eq!(r.timestamp, 4.0);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let p = Pose::new(Vec3::new(1.0, 2.0, 3.0), rot_z(1.1), 0.0);
        let r = p.compose(&p.inverse());
        assert!(r.position.norm() < 1e-12);
        assert!(r.orientation.angle() < 1e-12);
    }

    #[test]
    fn rotation_then_translation() {
        let a = Pose::from_rotation(rot_z(FRAC_PI_2));
        let b = Pose::from_translation(Vec3::new(1.0, 0.0, 0.0));
        let r = a.compose(&b);
        assert!((r.position - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn invert_translation() {
        let p = Pose::from_translation(Vec3::new(1.0, 2.0, 3.0));
        let inv = p.inverse();
        assert_eq!(inv.position, Vec3::new(-1.0, -2.0, -3.0));
        assert!(inv.orientation.angle() < 1e-15);
        assert_eq!(Pose::IDENTITY.inverse().position, Vec3::zeros());
    }

    #[test]
    fn transform_point_cases() {
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(Pose::IDENTITY.transform_point(&v), v);
        let p = Pose::from_rotation(rot_z(FRAC_PI_2));
        let r = p.transform_point(&Vec3::x());
        assert!((r - Vec3::y()).norm() < 1e-15);
    }

    #[test]
    fn handedness_cases() {
        let id = Pose::IDENTITY.convert_handedness();
        assert_eq!(id.position, Vec3::zeros());
        assert!(id.orientation.angle() < 1e-15);
        let p = Pose::from_translation(Vec3::new(1.0, 2.0, 3.0)).convert_handedness();
        assert_eq!(p.position, Vec3::new(1.0, 2.0, -3.0));
        assert_eq!(Handedness::RightHanded.other().other(), Handedness::RightHanded);
    }

    #[test]
    fn slerp_cases() {
        let a = Quat::IDENTITY;
        let b = rot_z(FRAC_PI_2);
        assert!(same_rotation(&slerp(&a, &b, 0.0), &a, 1e-12));
        assert!(same_rotation(&slerp(&a, &b, 1.0), &b, 1e-12));
        let mid = slerp(&a, &b, 0.5);
        assert!(same_rotation(&mid, &rot_z(FRAC_PI_4), 1e-12));
        // shortest arc: negated endpoint gives the same path
        let mid2 = slerp(&a, &b.negated(), 0.5);
        assert!(same_rotation(&mid2, &rot_z(FRAC_PI_4), 1e-12));
    }

    #[test]
    fn slerp_near_parallel_uses_lerp() {
        let a = rot_z(0.1);
        let b = rot_z(0.1 + 1e-5);
        let m = slerp(&a, &b, 0.5);
        assert!((m.norm() - 1.0).abs() < 1e-12);
        assert!(same_rotation(&m, &rot_z(0.1 + 0.5e-5), 1e-10));
    }

    #[test]
    fn rotation_vector_round_trip() {
        let v = Vec3::new(0.3, -0.2, 1.4);
        let q = Quat::from_rotation_vector(&v);
        assert!((q.to_rotation_vector() - v).norm() < 1e-12);
        assert!(Quat::IDENTITY.to_rotation_vector().norm() == 0.0);
    }

    #[test]
    fn canonical_direction_ties_and_sign() {
        assert_eq!(canonical_direction(&Vec3::new(0.0, 0.0, -1.0)), Vec3::z());
        assert_eq!(canonical_direction(&Vec3::new(-1.0, 1.0, 0.0)), Vec3::new(1.0, -1.0, 0.0));
        assert_eq!(canonical_direction(&Vec3::new(0.2, -0.9, 0.1)), Vec3::new(-0.2, 0.9, -0.1));
    }

    #[test]
    fn nalgebra_conversion_agrees() {
        let q = Quat::from_axis_angle(&Vec3::new(1.0, 2.0, -0.5), 0.7);
        let m = q.to_rotation_matrix();
        let back = Quat::from_rotation_matrix(&m);
        assert!(same_rotation(&q, &back, 1e-12));
        let uq: UnitQuaternion<f64> = q.into();
        assert!((uq.to_rotation_matrix().matrix() - m).norm() < 1e-14);
    }
}
