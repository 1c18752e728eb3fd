//! Attitude parameterizations for the body (b) to local-level (l) rotation.
//!
//! Frames: the body frame is x-right, y-forward, z-up; the local-level frame is
//! East-North-Up. Azimuth is measured clockwise from north, so a vehicle heading
//! east has `azimuth = pi/2` and its forward axis maps onto east.
//!
//! Quaternions store the vector part first and the scalar last, `(q1, q2, q3, q4)`,
//! and follow the Hamilton product. The direction-cosine matrix built from a
//! quaternion is the one for which [`quaternion_from_rotation`] is an exact inverse.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use super::GeoError;

/// Below this value of `1 + trace(R)` the scalar-first extraction is abandoned for
/// the largest-diagonal branch.
const QUAT_TRACE_TOL: f64 = 1e-6;
/// `cos(pitch)` below which roll and azimuth are no longer separable.
const GIMBAL_TOL: f64 = 1e-6;

/// Wrap an angle to `[0, 2pi)`.
pub fn wrap_two_pi(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_pi(angle: f64) -> f64 {
    // in-range values pass through untouched so small negatives keep full precision
    if angle > -PI && angle <= PI {
        return angle;
    }
    let a = wrap_two_pi(angle);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Pitch, roll and azimuth in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Attitude {
    pub pitch: f64,
    pub roll: f64,
    /// Clockwise from north, `[0, 2pi)`.
    pub azimuth: f64,
}

impl Attitude {
    /// Builds an attitude, wrapping the azimuth to `[0, 2pi)` and roll to `(-pi, pi]`.
    pub fn new(pitch: f64, roll: f64, azimuth: f64) -> Self {
        Self {
            pitch,
            roll: wrap_pi(roll),
            azimuth: wrap_two_pi(azimuth),
        }
    }

    pub fn level(azimuth: f64) -> Self {
        Self::new(0.0, 0.0, azimuth)
    }
}

/// Unit quaternion, vector part `(q1, q2, q3)` and scalar part `q4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::identity()
    }
}

impl Quaternion {
    pub const fn new(q1: f64, q2: f64, q3: f64, q4: f64) -> Self {
        Self { q1, q2, q3, q4 }
    }

    pub const fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0, 1.0)
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.q1, self.q2, self.q3, self.q4)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn norm_squared(&self) -> f64 {
        self.q1 * self.q1 + self.q2 * self.q2 + self.q3 * self.q3 + self.q4 * self.q4
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn conjugate(&self) -> Self {
        Self::new(-self.q1, -self.q2, -self.q3, self.q4)
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.q1, -self.q2, -self.q3, -self.q4)
    }

    /// Hamilton product `self * rhs`.
    pub fn mul(&self, rhs: &Quaternion) -> Quaternion {
        let a = Vector3::new(self.q1, self.q2, self.q3);
        let b = Vector3::new(rhs.q1, rhs.q2, rhs.q3);
        let v = b * self.q4 + a * rhs.q4 + a.cross(&b);
        Quaternion::new(v[0], v[1], v[2], self.q4 * rhs.q4 - a.dot(&b))
    }

    /// Rotation by `angle` about the unit `axis`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.normalize();
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new(n[0] * s, n[1] * s, n[2] * s, c)
    }
}

/// Orthonormal 3x3 direction-cosine matrix, b-frame to l-frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps a matrix without checking orthonormality.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// The inverse rotation (l-frame to b-frame).
    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Element at 1-based row `i`, column `j`.
    pub fn r(&self, i: usize, j: usize) -> f64 {
        self.0[(i - 1, j - 1)]
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Largest absolute entry of `R^T R - I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).amax()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }
}

/// Cross-product matrix: `skew(v) * w == v x w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}

/// Direction-cosine matrix of a pitch/roll/azimuth attitude.
pub fn rotation_from_attitude(att: &Attitude) -> RotationMatrix {
    let (sp, cp) = att.pitch.sin_cos();
    let (sr, cr) = att.roll.sin_cos();
    let (sa, ca) = att.azimuth.sin_cos();
    RotationMatrix(Matrix3::new(
        ca * cr + sa * sp * sr,
        sa * cp,
        ca * sr - sa * sp * cr,
        -sa * cr + ca * sp * sr,
        ca * cp,
        -sa * sr - ca * sp * cr,
        -cp * sr,
        sp,
        cp * cr,
    ))
}

/// Quaternion of a rotation matrix. The result has a non-negative scalar part.
pub fn quaternion_from_rotation(rot: &RotationMatrix) -> Result<Quaternion, GeoError> {
    let r = |i, j| rot.r(i, j);
    let trace_term = 1.0 + r(1, 1) + r(2, 2) + r(3, 3);
    if !trace_term.is_finite() {
        return Err(GeoError::DegenerateRotation);
    }
    let q = if trace_term > QUAT_TRACE_TOL {
        let q4 = 0.5 * trace_term.sqrt();
        Quaternion::new(
            0.25 * (r(3, 2) - r(2, 3)) / q4,
            0.25 * (r(1, 3) - r(3, 1)) / q4,
            0.25 * (r(2, 1) - r(1, 2)) / q4,
            q4,
        )
    } else {
        // near-180 degree rotation: pivot on the largest diagonal element
        let c1 = 1.0 + r(1, 1) - r(2, 2) - r(3, 3);
        let c2 = 1.0 - r(1, 1) + r(2, 2) - r(3, 3);
        let c3 = 1.0 - r(1, 1) - r(2, 2) + r(3, 3);
        let q = if c1 >= c2 && c1 >= c3 {
            let q1 = 0.5 * c1.max(0.0).sqrt();
            if q1 <= 0.5 * QUAT_TRACE_TOL.sqrt() {
                return Err(GeoError::DegenerateRotation);
            }
            Quaternion::new(
                q1,
                0.25 * (r(1, 2) + r(2, 1)) / q1,
                0.25 * (r(1, 3) + r(3, 1)) / q1,
                0.25 * (r(3, 2) - r(2, 3)) / q1,
            )
        } else if c2 >= c3 {
            let q2 = 0.5 * c2.max(0.0).sqrt();
            if q2 <= 0.5 * QUAT_TRACE_TOL.sqrt() {
                return Err(GeoError::DegenerateRotation);
            }
            Quaternion::new(
                0.25 * (r(1, 2) + r(2, 1)) / q2,
                q2,
                0.25 * (r(2, 3) + r(3, 2)) / q2,
                0.25 * (r(1, 3) - r(3, 1)) / q2,
            )
        } else {
            let q3 = 0.5 * c3.max(0.0).sqrt();
            if q3 <= 0.5 * QUAT_TRACE_TOL.sqrt() {
                return Err(GeoError::DegenerateRotation);
            }
            Quaternion::new(
                0.25 * (r(1, 3) + r(3, 1)) / q3,
                0.25 * (r(2, 3) + r(3, 2)) / q3,
                q3,
                0.25 * (r(2, 1) - r(1, 2)) / q3,
            )
        };
        if q.q4 < 0.0 {
            q.neg()
        } else {
            q
        }
    };
    normalize_quaternion(&q)
}

/// Direction-cosine matrix of a unit quaternion.
pub fn rotation_from_quaternion(q: &Quaternion) -> RotationMatrix {
    let Quaternion { q1, q2, q3, q4 } = *q;
    RotationMatrix(Matrix3::new(
        q1 * q1 - q2 * q2 - q3 * q3 + q4 * q4,
        2.0 * (q1 * q2 - q3 * q4),
        2.0 * (q1 * q3 + q2 * q4),
        2.0 * (q1 * q2 + q3 * q4),
        -q1 * q1 + q2 * q2 - q3 * q3 + q4 * q4,
        2.0 * (q2 * q3 - q1 * q4),
        2.0 * (q1 * q3 - q2 * q4),
        2.0 * (q2 * q3 + q1 * q4),
        -q1 * q1 - q2 * q2 + q3 * q3 + q4 * q4,
    ))
}

/// Pitch, roll and azimuth of a direction-cosine matrix.
pub fn attitude_from_rotation(rot: &RotationMatrix) -> Result<Attitude, GeoError> {
    let horiz = rot.r(1, 2).hypot(rot.r(2, 2));
    if horiz < GIMBAL_TOL {
        return Err(GeoError::GimbalProximity);
    }
    Ok(Attitude::new(
        rot.r(3, 2).atan2(horiz),
        -rot.r(3, 1).atan2(rot.r(3, 3)),
        rot.r(1, 2).atan2(rot.r(2, 2)),
    ))
}

/// First-order norm correction followed by exact renormalization.
pub fn normalize_quaternion(q: &Quaternion) -> Result<Quaternion, GeoError> {
    let n2 = q.norm_squared();
    if !(n2.sqrt() >= 1e-12) {
        return Err(GeoError::ZeroQuaternion);
    }
    let delta = 1.0 - n2;
    let v = q.as_vector() * (1.0 + 0.5 * delta);
    let v = v / v.norm();
    Ok(Quaternion::from_vector(&v))
}

/// 4x4 rate matrix such that `q_dot = 0.5 * omega_matrix(w) * q` for a body rate `w`.
pub fn omega_matrix(w: &Vector3<f64>) -> Matrix4<f64> {
    let (x, y, z) = (w[0], w[1], w[2]);
    Matrix4::new(
        0.0, z, -y, x, //
        -z, 0.0, x, y, //
        y, -x, 0.0, z, //
        -x, -y, -z, 0.0,
    )
}

/// One first-order quaternion integration step with body rate `w_lb` over `dt`.
pub fn propagate_quaternion(
    q: &Quaternion,
    w_lb: &Vector3<f64>,
    dt: f64,
) -> Result<Quaternion, GeoError> {
    let qv = q.as_vector();
    let next = qv + omega_matrix(w_lb) * qv * (0.5 * dt);
    normalize_quaternion(&Quaternion::from_vector(&next))
}

/// Quaternion of an attitude.
pub fn quaternion_from_attitude(att: &Attitude) -> Result<Quaternion, GeoError> {
    quaternion_from_rotation(&rotation_from_attitude(att))
}

/// Attitude of a quaternion.
pub fn attitude_from_quaternion(q: &Quaternion) -> Result<Attitude, GeoError> {
    attitude_from_rotation(&rotation_from_quaternion(q))
}
