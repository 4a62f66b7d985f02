//! Fingertip <-> dexterous-hand actuator mapping.
//!
//! Actuator order: `[thumb_flexion, index, middle, ring, pinky, thumb_rotation]`,
//! all normalized to `[0, 1]` (0 = open). Flexion actuators follow the
//! fingertip distance from the wrist:
//! `closure = 1 - clamp(|tip - wrist| / extent, 0, 1)`.
//! The thumb rotation actuator is the angle of the thumb tip around the palm
//! normal, measured from `thumb_rotation.reference` toward
//! `thumb_rotation.sweep` and normalized over `range`.
//!
//! Directions are given for the right hand in the wrist frame; the left hand
//! mirrors them across the wrist-frame xz plane.

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec3};
use crate::unified::{Side, FINGERS_PER_HAND};

pub const HAND_ACTUATORS: usize = 6;
pub type HandCommand = [f64; HAND_ACTUATORS];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerSpec {
    pub name: String,
    /// Unit ray from the wrist, wrist frame, right hand. Ignored for the
    /// thumb, whose ray comes from `thumb_rotation`.
    pub direction: [f64; 3],
    /// Wrist-to-tip distance when fully open, meters.
    pub extent_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThumbRotation {
    pub reference: [f64; 3],
    /// Orthogonal to `reference`; together they span the thumb plane.
    pub sweep: [f64; 3],
    pub range_deg: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandModel {
    /// Thumb, index, middle, ring, pinky.
    pub fingers: Vec<FingerSpec>,
    pub thumb_rotation: ThumbRotation,
    /// Physical range per actuator, radians; maps the normalized command.
    pub actuator_range_rad: Vec<[f64; 2]>,
}

fn mirror(v: [f64; 3], side: Side) -> Vec3 {
    match side {
        Side::Right => Vec3::new(v[0], v[1], v[2]),
        Side::Left => Vec3::new(v[0], -v[1], v[2]),
    }
}

impl HandModel {
    pub fn validate(&self) -> Result<(), String> {
        if self.fingers.len() != FINGERS_PER_HAND {
            return Err(format!("hand model needs 5 fingers, got {}", self.fingers.len()));
        }
        if self.actuator_range_rad.len() != HAND_ACTUATORS {
            return Err(format!(
                "hand model needs {HAND_ACTUATORS} actuators, got {}",
                self.actuator_range_rad.len()
            ));
        }
        for f in &self.fingers {
            if !(f.extent_m > 0.0) {
                return Err(format!("finger {} has non-positive extent", f.name));
            }
            if (Vec3::from(f.direction).norm() - 1.0).abs() > 1e-9 {
                return Err(format!("finger {} direction is not unit length", f.name));
            }
        }
        let r = Vec3::from(self.thumb_rotation.reference);
        let s = Vec3::from(self.thumb_rotation.sweep);
        if (r.norm() - 1.0).abs() > 1e-9 || (s.norm() - 1.0).abs() > 1e-9 || r.dot(&s).abs() > 1e-9 {
            return Err("thumb reference/sweep must be orthonormal".into());
        }
        let [lo, hi] = self.thumb_rotation.range_deg;
        if !(lo < hi) {
            return Err("thumb rotation range must be increasing".into());
        }
        if self.actuator_range_rad.iter().any(|[a, b]| !(a < b)) {
            return Err("actuator ranges must be increasing".into());
        }
        Ok(())
    }

    fn thumb_basis(&self, side: Side) -> (Vec3, Vec3) {
        (
            mirror(self.thumb_rotation.reference, side),
            mirror(self.thumb_rotation.sweep, side),
        )
    }

    fn thumb_range_rad(&self) -> (f64, f64) {
        let [lo, hi] = self.thumb_rotation.range_deg;
        (lo.to_radians(), hi.to_radians())
    }

    /// Converts a normalized command to physical actuator angles.
    pub fn to_joint_angles(&self, cmd: &HandCommand) -> [f64; HAND_ACTUATORS] {
        let mut out = [0.0; HAND_ACTUATORS];
        for (i, (c, [lo, hi])) in cmd.iter().zip(&self.actuator_range_rad).enumerate() {
            out[i] = lo + c * (hi - lo);
        }
        out
    }
}

/// Maps fingertip positions to normalized actuator commands.
pub fn retarget_hand(
    fingertips: &[Vec3; FINGERS_PER_HAND],
    wrist: &Pose,
    model: &HandModel,
    side: Side,
) -> HandCommand {
    retarget_hand_counted(fingertips, wrist, model, side).0
}

/// [`retarget_hand`] plus the number of actuators that had to be clamped.
pub fn retarget_hand_counted(
    fingertips: &[Vec3; FINGERS_PER_HAND],
    wrist: &Pose,
    model: &HandModel,
    side: Side,
) -> (HandCommand, usize) {
    let mut raw = [0.0; HAND_ACTUATORS];
    for (f, tip) in fingertips.iter().enumerate() {
        let d = (tip - wrist.translation).norm();
        raw[f] = 1.0 - d / model.fingers[f].extent_m;
    }
    let offset = wrist.rotation.transpose().apply(&(fingertips[0] - wrist.translation));
    let (r, s) = model.thumb_basis(side);
    let (x, y) = (offset.dot(&r), offset.dot(&s));
    let (lo, hi) = model.thumb_range_rad();
    raw[5] = if x == 0.0 && y == 0.0 {
        0.0
    } else {
        (y.atan2(x) - lo) / (hi - lo)
    };
    let mut clamps = 0;
    let mut cmd = [0.0; HAND_ACTUATORS];
    for (c, r) in cmd.iter_mut().zip(raw) {
        *c = if r.is_finite() { r.clamp(0.0, 1.0) } else { 0.0 };
        if *c != r {
            clamps += 1;
        }
    }
    (cmd, clamps)
}

/// Inverse of [`retarget_hand`]: places each fingertip along its ray.
pub fn fingertips_from_command(
    cmd: &HandCommand,
    wrist: &Pose,
    model: &HandModel,
    side: Side,
) -> [Vec3; FINGERS_PER_HAND] {
    let (r, s) = model.thumb_basis(side);
    let (lo, hi) = model.thumb_range_rad();
    let theta = lo + cmd[5].clamp(0.0, 1.0) * (hi - lo);
    let thumb_dir = r * theta.cos() + s * theta.sin();
    let mut tips = [Vec3::zeros(); FINGERS_PER_HAND];
    for (f, tip) in tips.iter_mut().enumerate() {
        let dir = if f == 0 {
            thumb_dir
        } else {
            mirror(model.fingers[f].direction, side)
        };
        let dist = (1.0 - cmd[f].clamp(0.0, 1.0)) * model.fingers[f].extent_m;
        *tip = wrist.transform_point(&(dir * dist));
    }
    tips
}
