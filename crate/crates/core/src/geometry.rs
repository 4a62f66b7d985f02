//! Rotation and pose algebra.
//!
//! The continuous 6D rotation codec stores the first two columns of a
//! rotation matrix, column-major: `[c1.x, c1.y, c1.z, c2.x, c2.y, c2.z]`.
//! Decoding re-orthogonalizes with Gram-Schmidt, so any pair of non-parallel
//! vectors maps to a valid rotation.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Minimum vector norm accepted by the 6D decoder.
pub const ROT6D_MIN_NORM: f64 = 1e-9;
/// Minimum angle between the two 6D columns, radians.
pub const ROT6D_MIN_ANGLE: f64 = 1e-6;
/// Arc angle below which slerp falls back to normalized lerp, radians.
pub const SLERP_LERP_THRESHOLD: f64 = 1e-6;
/// Tolerance used when validating orthonormality and determinant.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate 6D rotation: {0}")]
    DegenerateRotation6D(&'static str),
    #[error("matrix is not a proper rotation (orthonormality error {ortho:e}, det {det})")]
    NotARotation { ortho: f64, det: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// A proper rotation matrix (orthonormal columns, determinant +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl Default for RotationMatrix {
    fn default() -> Self {
        Self::identity()
    }
}

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates `m` against the orthonormality and determinant tolerances.
    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("rotation matrix"));
        }
        let ortho = orthonormality_error(&m);
        let det = m.determinant();
        if ortho > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::NotARotation { ortho, det });
        }
        Ok(Self(m))
    }

    /// Wraps a matrix produced by an operation that preserves rotations
    /// (products, Rodrigues, Gram-Schmidt).
    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Rodrigues' formula. `axis` need not be normalized; a zero axis yields identity.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        let k = axis / n;
        let (s, c) = angle.sin_cos();
        let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        Self(Matrix3::identity() + kx * s + kx * kx * (1.0 - c))
    }

    /// Inverse of [`RotationMatrix::log`].
    pub fn exp(rotvec: &Vec3) -> Self {
        Self::from_axis_angle(rotvec, rotvec.norm())
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::x(), angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::y(), angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::z(), angle)
    }

    /// `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_yaw_pitch_roll(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self::rot_z(yaw)
            .compose(&Self::rot_y(pitch))
            .compose(&Self::rot_x(roll))
    }

    /// ZYX decomposition, inverse of [`RotationMatrix::from_yaw_pitch_roll`].
    pub fn yaw_pitch_roll(&self) -> (f64, f64, f64) {
        let m = &self.0;
        let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
        let yaw = m[(1, 0)].atan2(m[(0, 0)]);
        let roll = m[(2, 1)].atan2(m[(2, 2)]);
        (yaw, pitch, roll)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    /// `self * other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn column(&self, i: usize) -> Vec3 {
        self.0.column(i).into_owned()
    }

    /// Rotation vector (axis * angle, angle in `[0, pi]`).
    pub fn log(&self) -> Vec3 {
        UnitQuaternion::from_rotation_matrix(self).log()
    }

    /// Geodesic angle between two rotations, radians.
    pub fn angle_to(&self, other: &Self) -> f64 {
        other.compose(&self.transpose()).log().norm()
    }

    pub fn to_rot6d(&self) -> Rotation6D {
        encode_rot6d(self)
    }

    pub fn to_quaternion(&self) -> UnitQuaternion {
        UnitQuaternion::from_rotation_matrix(self)
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.0)
    }
}

fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).amax()
}

/// First two rotation-matrix columns, stacked column-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation6D(pub [f64; 6]);

impl Rotation6D {
    pub const IDENTITY: Rotation6D = Rotation6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    pub fn columns(&self) -> (Vec3, Vec3) {
        let r = &self.0;
        (Vec3::new(r[0], r[1], r[2]), Vec3::new(r[3], r[4], r[5]))
    }

    pub fn decode(&self) -> Result<RotationMatrix, GeometryError> {
        decode_rot6d(self)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn from_slice(s: &[f64]) -> Self {
        let mut r = [0.0; 6];
        r.copy_from_slice(&s[..6]);
        Self(r)
    }
}

/// Gram-Schmidt decoding of a 6D rotation.
pub fn decode_rot6d(r: &Rotation6D) -> Result<RotationMatrix, GeometryError> {
    if r.0.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NonFinite("6D rotation"));
    }
    let (a, b) = r.columns();
    let (na, nb) = (a.norm(), b.norm());
    if na < ROT6D_MIN_NORM || nb < ROT6D_MIN_NORM {
        return Err(GeometryError::DegenerateRotation6D("column norm below 1e-9"));
    }
    let sin_angle = a.cross(&b).norm() / (na * nb);
    if sin_angle < ROT6D_MIN_ANGLE.sin() {
        return Err(GeometryError::DegenerateRotation6D("columns are parallel"));
    }
    let c1 = a / na;
    let b_perp = b - c1 * b.dot(&c1);
    let c2 = b_perp / b_perp.norm();
    let c3 = c1.cross(&c2);
    Ok(RotationMatrix::from_matrix_unchecked(Matrix3::from_columns(&[
        c1, c2, c3,
    ])))
}

pub fn encode_rot6d(rot: &RotationMatrix) -> Rotation6D {
    let m = rot.matrix();
    Rotation6D([
        m[(0, 0)],
        m[(1, 0)],
        m[(2, 0)],
        m[(0, 1)],
        m[(1, 1)],
        m[(2, 1)],
    ])
}

/// Unit quaternion with the sign fixed so that `w >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes and canonicalizes. Fails on a zero or non-finite input.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < 1e-12 {
            return Err(GeometryError::NonFinite("quaternion"));
        }
        Ok(Self::canonical(w / n, x / n, y / n, z / n))
    }

    fn canonical(w: f64, x: f64, y: f64, z: f64) -> Self {
        let flip = if w != 0.0 {
            w < 0.0
        } else {
            // w == 0: make the first non-zero vector component positive.
            [x, y, z]
                .into_iter()
                .find(|v| *v != 0.0)
                .is_some_and(|v| v < 0.0)
        };
        if flip {
            Self {
                w: -w,
                x: -x,
                y: -y,
                z: -z,
            }
        } else {
            Self { w, x, y, z }
        }
    }

    pub fn from_array(q: [f64; 4]) -> Result<Self, GeometryError> {
        Self::new(q[0], q[1], q[2], q[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (angle / 2.0).sin_cos();
        let k = axis / n * s;
        Self::canonical(c, k.x, k.y, k.z)
    }

    /// Shepperd's method: picks the numerically largest component first.
    pub fn from_rotation_matrix(rot: &RotationMatrix) -> Self {
        let m = rot.matrix();
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let (w, x, y, z);
        if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            w = 0.25 * s;
            x = (m[(2, 1)] - m[(1, 2)]) / s;
            y = (m[(0, 2)] - m[(2, 0)]) / s;
            z = (m[(1, 0)] - m[(0, 1)]) / s;
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            w = (m[(2, 1)] - m[(1, 2)]) / s;
            x = 0.25 * s;
            y = (m[(0, 1)] + m[(1, 0)]) / s;
            z = (m[(0, 2)] + m[(2, 0)]) / s;
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            w = (m[(0, 2)] - m[(2, 0)]) / s;
            x = (m[(0, 1)] + m[(1, 0)]) / s;
            y = 0.25 * s;
            z = (m[(1, 2)] + m[(2, 1)]) / s;
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            w = (m[(1, 0)] - m[(0, 1)]) / s;
            x = (m[(0, 2)] + m[(2, 0)]) / s;
            y = (m[(1, 2)] + m[(2, 1)]) / s;
            z = 0.25 * s;
        }
        let n = (w * w + x * x + y * y + z * z).sqrt();
        Self::canonical(w / n, x / n, y / n, z / n)
    }

    pub fn to_rotation_matrix(&self) -> RotationMatrix {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        RotationMatrix::from_matrix_unchecked(Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ))
    }

    /// Rotation vector with angle in `[0, pi]`.
    pub fn log(&self) -> Vec3 {
        let v = Vec3::new(self.x, self.y, self.z);
        let s = v.norm();
        // w >= 0 by construction, so the angle is at most pi.
        let scale = if s < 1e-12 {
            2.0 / self.w
        } else {
            2.0 * s.atan2(self.w) / s
        };
        v * scale
    }

    /// Rotation angle separating two quaternions, radians.
    pub fn angle_to(&self, other: &Self) -> f64 {
        let d = self.dot(other).abs().min(1.0);
        // 2*atan2 is better conditioned than 2*acos near zero.
        let diff = (1.0 - d * d).max(0.0).sqrt();
        2.0 * diff.atan2(d)
    }
}

/// Shortest-arc spherical linear interpolation.
pub fn slerp(q0: &UnitQuaternion, q1: &UnitQuaternion, t: f64) -> UnitQuaternion {
    let mut b = *q1;
    let mut d = q0.dot(q1);
    if d < 0.0 {
        b = UnitQuaternion {
            w: -b.w,
            x: -b.x,
            y: -b.y,
            z: -b.z,
        };
        d = -d;
    }
    let d = d.min(1.0);
    let half = ((1.0 - d * d).max(0.0)).sqrt().atan2(d);
    let (ka, kb) = if 2.0 * half < SLERP_LERP_THRESHOLD {
        (1.0 - t, t)
    } else {
        let s = half.sin();
        (((1.0 - t) * half).sin() / s, (t * half).sin() / s)
    };
    let (w, x, y, z) = (
        ka * q0.w + kb * b.w,
        ka * q0.x + kb * b.x,
        ka * q0.y + kb * b.y,
        ka * q0.z + kb * b.z,
    );
    let n = (w * w + x * x + y * y + z * z).sqrt();
    UnitQuaternion::canonical(w / n, x / n, y / n, z / n)
}

/// Rigid transform: `p_parent = rotation * p_child + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub rotation: RotationMatrix,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: RotationMatrix, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(RotationMatrix::identity(), t)
    }

    pub fn from_rotation(r: RotationMatrix) -> Self {
        Self::new(r, Vec3::zeros())
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.apply(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -rt.apply(&self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.matrix().iter().all(|v| v.is_finite())
    }
}

/// Linear translation, slerped rotation. `t` outside `[0, 1]` is clamped.
pub fn interpolate_pose(p0: &Pose, p1: &Pose, t: f64) -> Pose {
    let t = t.clamp(0.0, 1.0);
    if t == 0.0 {
        return *p0;
    }
    if t == 1.0 {
        return *p1;
    }
    let q = slerp(&p0.rotation.to_quaternion(), &p1.rotation.to_quaternion(), t);
    Pose {
        rotation: q.to_rotation_matrix(),
        translation: p0.translation + (p1.translation - p0.translation) * t,
    }
}

/// Uniformly distributed rotation (normalized Gaussian 4-vector).
pub fn sample_rotation<R: Rng + ?Sized>(rng: &mut R) -> RotationMatrix {
    loop {
        let v: [f64; 4] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        if let Ok(q) = UnitQuaternion::from_array(v) {
            return q.to_rotation_matrix();
        }
    }
}
