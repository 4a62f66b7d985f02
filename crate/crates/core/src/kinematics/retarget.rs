use serde::{Deserialize, Serialize};

use super::embodiment::EmbodimentConfig;
use super::hand::{fingertips_from_command, retarget_hand_counted, HandCommand};
use super::ik::{ik_solve, IkParams, IkStatus};
use super::KinematicsError;
use crate::geometry::{RotationMatrix, Vec3};
use crate::unified::{Side, UnifiedState, FINGERS_PER_HAND};

/// Joint-space robot command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotCommand {
    pub left_arm: Vec<f64>,
    pub right_arm: Vec<f64>,
    /// `(yaw, pitch)`, radians.
    pub neck: [f64; 2],
    pub left_hand: HandCommand,
    pub right_hand: HandCommand,
}

impl RobotCommand {
    /// All-zero command for `config`.
    pub fn zeros(config: &EmbodimentConfig) -> Self {
        Self {
            left_arm: vec![0.0; config.left_arm.dof()],
            right_arm: vec![0.0; config.right_arm.dof()],
            neck: [0.0; 2],
            left_hand: [0.0; 6],
            right_hand: [0.0; 6],
        }
    }

    pub fn arm(&self, side: Side) -> &[f64] {
        match side {
            Side::Left => &self.left_arm,
            Side::Right => &self.right_arm,
        }
    }

    pub fn hand(&self, side: Side) -> &HandCommand {
        match side {
            Side::Left => &self.left_hand,
            Side::Right => &self.right_hand,
        }
    }

    /// Flat joint vector: left arm, right arm, neck, left hand, right hand.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.left_arm.len() * 2 + 14);
        v.extend_from_slice(&self.left_arm);
        v.extend_from_slice(&self.right_arm);
        v.extend_from_slice(&self.neck);
        v.extend_from_slice(&self.left_hand);
        v.extend_from_slice(&self.right_hand);
        v
    }

    pub fn from_flat(v: &[f64], arm_dof: usize) -> Result<Self, KinematicsError> {
        let expected = 2 * arm_dof + 14;
        if v.len() != expected {
            return Err(KinematicsError::DimensionMismatch {
                expected,
                got: v.len(),
            });
        }
        let mut lh = [0.0; 6];
        let mut rh = [0.0; 6];
        let o = 2 * arm_dof;
        lh.copy_from_slice(&v[o + 2..o + 8]);
        rh.copy_from_slice(&v[o + 8..o + 14]);
        Ok(Self {
            left_arm: v[..arm_dof].to_vec(),
            right_arm: v[arm_dof..o].to_vec(),
            neck: [v[o], v[o + 1]],
            left_hand: lh,
            right_hand: rh,
        })
    }

    /// Checks dimensions, joint limits and hand ranges.
    pub fn validate(&self, config: &EmbodimentConfig) -> Result<(), KinematicsError> {
        for (side, q) in [(Side::Left, &self.left_arm), (Side::Right, &self.right_arm)] {
            let arm = config.arm(side);
            if q.len() != arm.dof() {
                return Err(KinematicsError::DimensionMismatch {
                    expected: arm.dof(),
                    got: q.len(),
                });
            }
            if !arm.within_limits(q) {
                return Err(KinematicsError::LimitViolation(format!("{side:?} arm")));
            }
        }
        if !config.neck.within_limits(&self.neck) {
            return Err(KinematicsError::LimitViolation("neck".into()));
        }
        let hands_ok = self
            .left_hand
            .iter()
            .chain(&self.right_hand)
            .all(|v| (0.0..=1.0).contains(v));
        if !hands_ok {
            return Err(KinematicsError::LimitViolation("hand command outside [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimbDiagnostics {
    pub status: IkStatus,
    pub position_error: f64,
    pub orientation_error: f64,
    pub iterations: usize,
    pub clamped_joints: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetargetDiagnostics {
    pub left: LimbDiagnostics,
    pub right: LimbDiagnostics,
    pub neck_clamped: bool,
    pub hand_clamps: usize,
}

impl RetargetDiagnostics {
    /// Total clamp events across limbs, neck and hands.
    pub fn clamp_events(&self) -> usize {
        self.left.clamped_joints
            + self.right.clamped_joints
            + usize::from(self.neck_clamped)
            + self.hand_clamps
    }
}

/// Head rotation -> `(yaw, pitch)` with roll discarded.
pub fn neck_from_head(head: &RotationMatrix) -> [f64; 2] {
    let (yaw, pitch, _roll) = head.yaw_pitch_roll();
    [yaw, pitch]
}

/// Retargets unified actions for one embodiment.
#[derive(Debug, Clone)]
pub struct Retargeter<'a> {
    pub config: &'a EmbodimentConfig,
    pub params: IkParams,
    /// When false the neck holds its previous command.
    pub include_head: bool,
}

impl<'a> Retargeter<'a> {
    pub fn new(config: &'a EmbodimentConfig, params: IkParams) -> Self {
        Self {
            config,
            params,
            include_head: true,
        }
    }

    pub fn retarget(
        &self,
        a: &UnifiedState,
        q_prev: &RobotCommand,
    ) -> Result<(RobotCommand, RetargetDiagnostics), KinematicsError> {
        let v = a.to_vector();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(KinematicsError::RetargetFailure("non-finite action".into()));
        }
        let decode = |side| {
            a.wrist_pose(side)
                .map_err(|e| KinematicsError::RetargetFailure(e.to_string()))
        };
        let mut limbs = Vec::with_capacity(2);
        let mut hands = Vec::with_capacity(2);
        let mut hand_clamps = 0;
        for side in [Side::Left, Side::Right] {
            let target = decode(side)?;
            let sol = ik_solve(self.config.arm(side), &target, q_prev.arm(side), &self.params)?;
            // Fingertips are read relative to the commanded wrist pose.
            let (hand, clamps) = retarget_hand_counted(
                &a.hand_fingertips(side),
                &target,
                &self.config.hand_model,
                side,
            );
            hand_clamps += clamps;
            hands.push(hand);
            limbs.push((
                sol.q,
                LimbDiagnostics {
                    status: sol.status,
                    position_error: sol.position_error,
                    orientation_error: sol.orientation_error,
                    iterations: sol.iterations,
                    clamped_joints: sol.clamped_joints,
                },
            ));
        }
        let (neck, neck_clamped) = if self.include_head {
            let head = a
                .head_rot
                .decode()
                .map_err(|e| KinematicsError::RetargetFailure(e.to_string()))?;
            let mut n = neck_from_head(&head);
            let clamped = self.config.neck.clamp(&mut n) > 0;
            (n, clamped)
        } else {
            (q_prev.neck, false)
        };
        let (right_q, right_d) = limbs.pop().expect("right limb");
        let (left_q, left_d) = limbs.pop().expect("left limb");
        Ok((
            RobotCommand {
                left_arm: left_q,
                right_arm: right_q,
                neck,
                left_hand: hands[0],
                right_hand: hands[1],
            },
            RetargetDiagnostics {
                left: left_d,
                right: right_d,
                neck_clamped,
                hand_clamps,
            },
        ))
    }
}

/// IK for both wrists warm-started at `q_prev`, neck from the head rotation,
/// hands from fingertip distances.
pub fn retarget_action(
    a: &UnifiedState,
    config: &EmbodimentConfig,
    q_prev: &RobotCommand,
    params: &IkParams,
) -> Result<(RobotCommand, RetargetDiagnostics), KinematicsError> {
    Retargeter::new(config, *params).retarget(a, q_prev)
}

/// Expresses a robot command (or joint readings) in the unified space.
pub fn embed_robot_state(
    cmd: &RobotCommand,
    config: &EmbodimentConfig,
) -> Result<UnifiedState, KinematicsError> {
    let left = config.left_arm.forward_kinematics(&cmd.left_arm)?;
    let right = config.right_arm.forward_kinematics(&cmd.right_arm)?;
    let head = config.neck.forward_kinematics(&cmd.neck)?;
    let lt = fingertips_from_command(&cmd.left_hand, &left, &config.hand_model, Side::Left);
    let rt = fingertips_from_command(&cmd.right_hand, &right, &config.hand_model, Side::Right);
    let mut tips = [Vec3::zeros(); 10];
    tips[..FINGERS_PER_HAND].copy_from_slice(&lt);
    tips[FINGERS_PER_HAND..].copy_from_slice(&rt);
    Ok(UnifiedState::from_poses(&head.rotation, &left, &right, tips))
}

/// Head position of the robot in the canonical frame.
pub fn robot_head_position(config: &EmbodimentConfig, neck: &[f64; 2]) -> Result<Vec3, KinematicsError> {
    Ok(config.neck.forward_kinematics(neck)?.translation)
}
