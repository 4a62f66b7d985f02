use nalgebra::DMatrix;

use super::KinematicsError;
use crate::geometry::{Pose, RotationMatrix, Vec3};

/// Revolute joint. `axis` is expressed in the frame reached after `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub axis: Vec3,
    pub origin: Pose,
    /// `(lo, hi)` in radians.
    pub limits: (f64, f64),
}

impl Joint {
    pub fn new(
        name: impl Into<String>,
        axis: Vec3,
        origin: Pose,
        limits: (f64, f64),
    ) -> Result<Self, KinematicsError> {
        let name = name.into();
        if !((axis.norm() - 1.0).abs() <= 1e-9) {
            return Err(KinematicsError::InvalidChain(format!(
                "joint {name}: axis is not unit length"
            )));
        }
        if !(limits.0 < limits.1) {
            return Err(KinematicsError::InvalidChain(format!(
                "joint {name}: lower limit must be below upper limit"
            )));
        }
        Ok(Self {
            name,
            axis,
            origin,
            limits,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    joints: Vec<Joint>,
    pub base_frame: Pose,
    pub tip_offset: Pose,
}

/// World-frame joint axes and anchor points along with the tip pose.
#[derive(Debug, Clone)]
pub struct ChainFrames {
    pub axes: Vec<Vec3>,
    pub points: Vec<Vec3>,
    pub tip: Pose,
}

impl KinematicChain {
    pub fn new(joints: Vec<Joint>, base_frame: Pose, tip_offset: Pose) -> Result<Self, KinematicsError> {
        if joints.is_empty() {
            return Err(KinematicsError::InvalidChain("chain has no joints".into()));
        }
        Ok(Self {
            joints,
            base_frame,
            tip_offset,
        })
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn limits(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.joints.iter().map(|j| j.limits)
    }

    fn check_dim(&self, q: &[f64]) -> Result<(), KinematicsError> {
        if q.len() == self.dof() {
            Ok(())
        } else {
            Err(KinematicsError::DimensionMismatch {
                expected: self.dof(),
                got: q.len(),
            })
        }
    }

    pub fn frames(&self, q: &[f64]) -> Result<ChainFrames, KinematicsError> {
        self.check_dim(q)?;
        let mut t = self.base_frame;
        let mut axes = Vec::with_capacity(q.len());
        let mut points = Vec::with_capacity(q.len());
        for (joint, &angle) in self.joints.iter().zip(q) {
            t = t.compose(&joint.origin);
            axes.push(t.rotation.apply(&joint.axis));
            points.push(t.translation);
            t = t.compose(&Pose::from_rotation(RotationMatrix::from_axis_angle(
                &joint.axis,
                angle,
            )));
        }
        Ok(ChainFrames {
            axes,
            points,
            tip: t.compose(&self.tip_offset),
        })
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Pose, KinematicsError> {
        Ok(self.frames(q)?.tip)
    }

    /// Geometric Jacobian, `6 x n`: linear velocity rows then angular rows.
    pub fn jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>, KinematicsError> {
        let f = self.frames(q)?;
        Ok(jacobian_from_frames(&f))
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.dof()
            && self
                .joints
                .iter()
                .zip(q)
                .all(|(j, v)| *v >= j.limits.0 && *v <= j.limits.1)
    }

    /// Clamps in place; returns how many joints were moved.
    pub fn clamp(&self, q: &mut [f64]) -> usize {
        let mut n = 0;
        for (j, v) in self.joints.iter().zip(q.iter_mut()) {
            let c = v.clamp(j.limits.0, j.limits.1);
            if c != *v {
                n += 1;
                *v = c;
            }
        }
        n
    }

    /// Joints sitting exactly on a limit.
    pub fn at_limit(&self, q: &[f64]) -> usize {
        self.joints
            .iter()
            .zip(q)
            .filter(|(j, v)| **v == j.limits.0 || **v == j.limits.1)
            .count()
    }
}

pub(crate) fn jacobian_from_frames(f: &ChainFrames) -> DMatrix<f64> {
    let n = f.axes.len();
    let mut j = DMatrix::zeros(6, n);
    for i in 0..n {
        let w = f.axes[i];
        let v = w.cross(&(f.tip.translation - f.points[i]));
        for r in 0..3 {
            j[(r, i)] = v[r];
            j[(r + 3, i)] = w[r];
        }
    }
    j
}
