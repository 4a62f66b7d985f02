//! Embodiments, forward/inverse kinematics and retargeting of unified
//! actions to joint commands.

mod chain;
mod embodiment;
mod hand;
mod ik;
mod retarget;

use thiserror::Error;

pub use chain::{ChainFrames, Joint, KinematicChain};
pub use embodiment::{ChainFile, EmbodimentConfig, EmbodimentFile, JointFile, PoseFile};
pub use hand::{
    fingertips_from_command, retarget_hand, retarget_hand_counted, FingerSpec, HandCommand,
    HandModel, ThumbRotation, HAND_ACTUATORS,
};
pub use ik::{ik_solve, IkParams, IkSolution, IkStatus};
pub use retarget::{
    embed_robot_state, neck_from_head, retarget_action, robot_head_position, LimbDiagnostics,
    RetargetDiagnostics, Retargeter, RobotCommand,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("expected {expected} joint values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("IK target is not finite")]
    NonFiniteTarget,
    #[error("invalid kinematic chain: {0}")]
    InvalidChain(String),
    #[error("invalid IK parameters: {0}")]
    InvalidParams(String),
    #[error("embodiment config: {0}")]
    Config(String),
    #[error("joint limit violated: {0}")]
    LimitViolation(String),
    #[error("retargeting failed: {0}")]
    RetargetFailure(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_rotation, Pose, RotationMatrix, Vec3};
    use crate::unified::Side;
    use nalgebra::Matrix4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn planar_two_link() -> KinematicChain {
        let j1 = Joint::new("j1", Vec3::z(), Pose::identity(), (-3.0, 3.0)).unwrap();
        let j2 = Joint::new(
            "j2",
            Vec3::z(),
            Pose::from_translation(Vec3::new(1.0, 0.0, 0.0)),
            (-3.0, 3.0),
        )
        .unwrap();
        KinematicChain::new(
            vec![j1, j2],
            Pose::identity(),
            Pose::from_translation(Vec3::new(1.0, 0.0, 0.0)),
        )
        .unwrap()
    }

    fn random_chain(rng: &mut ChaCha8Rng, n: usize) -> KinematicChain {
        let joints = (0..n)
            .map(|i| {
                let axis = Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
                .normalize();
                let origin = Pose::new(
                    sample_rotation(rng),
                    Vec3::new(
                        rng.random_range(-0.3..0.3),
                        rng.random_range(-0.3..0.3),
                        rng.random_range(-0.3..0.3),
                    ),
                );
                Joint::new(format!("j{i}"), axis, origin, (-3.0, 3.0)).unwrap()
            })
            .collect();
        KinematicChain::new(
            joints,
            Pose::new(sample_rotation(rng), Vec3::new(0.1, 0.2, 0.3)),
            Pose::from_translation(Vec3::new(0.0, 0.0, 0.1)),
        )
        .unwrap()
    }

    /// Homogeneous 4x4 product, built without the Pose type.
    fn homogeneous(rot: &nalgebra::Matrix3<f64>, t: &Vec3) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(rot);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
        m
    }

    fn fk_oracle(chain: &KinematicChain, q: &[f64]) -> Matrix4<f64> {
        let rodrigues = |k: &Vec3, a: f64| {
            let kx = nalgebra::Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
            nalgebra::Matrix3::identity() + kx * a.sin() + kx * kx * (1.0 - a.cos())
        };
        let mut m = homogeneous(chain.base_frame.rotation.matrix(), &chain.base_frame.translation);
        for (j, a) in chain.joints().iter().zip(q) {
            m *= homogeneous(j.origin.rotation.matrix(), &j.origin.translation);
            m *= homogeneous(&rodrigues(&j.axis, *a), &Vec3::zeros());
        }
        m * homogeneous(chain.tip_offset.rotation.matrix(), &chain.tip_offset.translation)
    }

    #[test]
    fn fk_single_joint_quarter_turn() {
        let j = Joint::new("z", Vec3::z(), Pose::identity(), (-3.0, 3.0)).unwrap();
        let c = KinematicChain::new(
            vec![j],
            Pose::identity(),
            Pose::from_translation(Vec3::new(1.0, 0.0, 0.0)),
        )
        .unwrap();
        let p = c.forward_kinematics(&[FRAC_PI_2]).unwrap();
        assert!((p.translation - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        let jac = c.jacobian(&[0.0]).unwrap();
        let col: Vec<f64> = jac.column(0).iter().copied().collect();
        assert_eq!(col, vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            c.forward_kinematics(&[0.0, 1.0]),
            Err(KinematicsError::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn fk_zero_is_product_of_origins() {
        let cfg = EmbodimentConfig::humanoid_a();
        let p = cfg.right_arm.forward_kinematics(&[0.0; 5]).unwrap();
        // shoulder (0,-0.2,0.35) + upper arm 0.3 + forearm 0.28 straight down
        assert!((p.translation - Vec3::new(0.0, -0.2, 0.35 - 0.58)).norm() < 1e-15);
    }

    #[test]
    fn zero_length_chain_has_zero_position_rows() {
        let j = Joint::new("z", Vec3::x(), Pose::identity(), (-1.0, 1.0)).unwrap();
        let c = KinematicChain::new(vec![j], Pose::identity(), Pose::identity()).unwrap();
        let jac = c.jacobian(&[0.4]).unwrap();
        assert!(jac.rows(0, 3).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fk_matches_matrix_chain_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let chain = random_chain(&mut rng, 7);
            let q: Vec<f64> = (0..7).map(|_| rng.random_range(-3.0..3.0)).collect();
            let p = chain.forward_kinematics(&q).unwrap();
            let m = fk_oracle(&chain, &q);
            let h = homogeneous(p.rotation.matrix(), &p.translation);
            assert!((h - m).amax() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = 1e-6;
        for _ in 0..50 {
            let chain = random_chain(&mut rng, 6);
            let q: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let jac = chain.jacobian(&q).unwrap();
            for i in 0..6 {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[i] += h;
                qm[i] -= h;
                let pp = chain.forward_kinematics(&qp).unwrap();
                let pm = chain.forward_kinematics(&qm).unwrap();
                let dv = (pp.translation - pm.translation) / (2.0 * h);
                let dw = pm.rotation.transpose().compose(&pp.rotation);
                let dw = pm.rotation.apply(&dw.log()) / (2.0 * h);
                let col = jac.column(i);
                let analytic = Vec3::new(col[0], col[1], col[2]);
                let ang = Vec3::new(col[3], col[4], col[5]);
                let scale = analytic.norm().max(1.0);
                assert!((analytic - dv).norm() / scale < 1e-5);
                assert!((ang - dw).norm() < 1e-5);
            }
        }
    }

    #[test]
    fn ik_fixed_point() {
        let cfg = EmbodimentConfig::humanoid_a();
        let q = vec![-0.5, 0.2, 0.1, 1.2, 0.3];
        let target = cfg.left_arm.forward_kinematics(&q).unwrap();
        let sol = ik_solve(&cfg.left_arm, &target, &q, &IkParams::default()).unwrap();
        assert_eq!(sol.status, IkStatus::Converged);
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.q, q);
    }

    #[test]
    fn ik_planar_two_link_closed_form() {
        let chain = planar_two_link();
        // closed form: elbow angle from the law of cosines, shoulder from atan2
        let (x, y) = (1.0f64, 1.0f64);
        let c2 = (x * x + y * y - 2.0) / 2.0;
        let q2 = c2.acos();
        let q1 = y.atan2(x) - (q2.sin()).atan2(1.0 + q2.cos());
        let target = chain.forward_kinematics(&[q1, q2]).unwrap();
        let params = IkParams {
            pos_tol: 1e-6,
            rot_tol: 1e-6,
            max_iters: 500,
            ..IkParams::default()
        };
        let sol = ik_solve(&chain, &target, &[0.0, 0.0], &params).unwrap();
        assert_eq!(sol.status, IkStatus::Converged);
        assert!(q1.abs() < 1e-12 && (q2 - FRAC_PI_2).abs() < 1e-12);
        assert!((sol.q[0] - q1).abs() < 1e-5);
        assert!((sol.q[1] - q2).abs() < 1e-5);
    }

    #[test]
    fn ik_unreachable_projects_onto_reach_sphere() {
        let chain = planar_two_link();
        let target = Pose::from_translation(Vec3::new(3.0, 0.0, 0.0));
        let defaults = IkParams {
            orientation_weight: 0.0,
            ..IkParams::default()
        };
        // convergence is slow next to the outstretched singularity
        let long = IkParams {
            max_iters: 500,
            ..defaults
        };
        let cases = [
            ([0.0, 0.0], defaults),
            ([0.3, -0.2], long),
            ([-0.4, 0.5], long),
            ([1.0, 1.0], long),
        ];
        for (init, params) in cases {
            let sol = ik_solve(&chain, &target, &init, &params).unwrap();
            assert_eq!(sol.status, IkStatus::BestEffort);
            let tip = chain.forward_kinematics(&sol.q).unwrap().translation;
            // closest reachable point is (2, 0, 0)
            assert!((tip - Vec3::new(2.0, 0.0, 0.0)).norm() < params.pos_tol, "{init:?} {tip:?}");
            assert!((sol.position_error - 1.0).abs() < params.pos_tol);
        }
    }

    #[test]
    fn ik_residual_never_increases() {
        let cfg = EmbodimentConfig::humanoid_b();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let target = Pose::new(
                sample_rotation(&mut rng),
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ),
            );
            let q0 = vec![0.1; 7];
            let p0 = cfg.right_arm.forward_kinematics(&q0).unwrap();
            let start = (target.translation - p0.translation).norm_squared()
                + target.rotation.angle_to(&p0.rotation).powi(2);
            let sol = ik_solve(&cfg.right_arm, &target, &q0, &IkParams::default()).unwrap();
            let end = sol.position_error.powi(2) + sol.orientation_error.powi(2);
            assert!(end <= start + 1e-12);
            assert!(cfg.right_arm.within_limits(&sol.q));
        }
    }

    #[test]
    fn ik_slides_along_an_active_limit() {
        // From this start the unconstrained step drives shoulder roll into its
        // lower limit; the solver must keep moving the other joints.
        let cfg = EmbodimentConfig::humanoid_a();
        let q0 = [-0.5, (-19f64).to_radians(), 0.1, 1.4, -0.3];
        let p0 = cfg.right_arm.forward_kinematics(&q0).unwrap();
        let target = Pose::new(p0.rotation, p0.translation + Vec3::new(0.02, 0.03, 0.0));
        let params = IkParams {
            orientation_weight: 0.1,
            ..IkParams::default()
        };
        let sol = ik_solve(&cfg.right_arm, &target, &q0, &params).unwrap();
        assert!(sol.iterations > 0);
        assert!(sol.position_error < 0.5 * 0.036, "{}", sol.position_error);
        assert!(cfg.right_arm.within_limits(&sol.q));
    }

    #[test]
    fn ik_errors() {
        let chain = planar_two_link();
        let bad = Pose::from_translation(Vec3::new(f64::NAN, 0.0, 0.0));
        assert_eq!(
            ik_solve(&chain, &bad, &[0.0, 0.0], &IkParams::default()),
            Err(KinematicsError::NonFiniteTarget)
        );
        assert!(matches!(
            ik_solve(&chain, &Pose::identity(), &[0.0], &IkParams::default()),
            Err(KinematicsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ik_is_deterministic_and_respects_limits() {
        let cfg = EmbodimentConfig::humanoid_b();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let q: Vec<f64> = cfg
                .right_arm
                .limits()
                .map(|(lo, hi)| rng.random_range(lo..hi))
                .collect();
            let target = cfg.right_arm.forward_kinematics(&q).unwrap();
            let init: Vec<f64> = q.iter().map(|v| v + 0.2).collect();
            let mut init2 = init.clone();
            cfg.right_arm.clamp(&mut init2);
            let a = ik_solve(&cfg.right_arm, &target, &init2, &IkParams::default()).unwrap();
            let b = ik_solve(&cfg.right_arm, &target, &init2, &IkParams::default()).unwrap();
            assert_eq!(a, b);
            assert!(cfg.right_arm.within_limits(&a.q));
        }
    }

    #[test]
    fn table_limits_transcribed() {
        let a = EmbodimentConfig::humanoid_a();
        let b = EmbodimentConfig::humanoid_b();
        let deg = |c: &KinematicChain, i: usize| {
            let (lo, hi) = c.joints()[i].limits;
            (lo.to_degrees().round(), hi.to_degrees().round())
        };
        assert_eq!(a.arm_dof(), 5);
        assert_eq!(b.arm_dof(), 7);
        assert_eq!(deg(&a.left_arm, 0), (-164.0, 164.0));
        assert_eq!(deg(&a.left_arm, 1), (-19.0, 178.0));
        assert_eq!(deg(&a.left_arm, 2), (-74.0, 255.0));
        assert_eq!(deg(&a.left_arm, 3), (-71.0, 150.0));
        assert_eq!(deg(&a.left_arm, 4), (-175.0, 175.0));
        assert_eq!(deg(&b.right_arm, 0), (-180.0, 90.0));
        assert_eq!(deg(&b.right_arm, 1), (-21.0, 194.0));
        assert_eq!(deg(&b.right_arm, 2), (-152.0, 172.0));
        assert_eq!(deg(&b.right_arm, 3), (-54.0, 182.0));
        assert_eq!(deg(&b.right_arm, 4), (-172.0, 157.0));
    }

    #[test]
    fn config_json_roundtrip_and_validation() {
        let a = EmbodimentConfig::humanoid_a();
        let again = EmbodimentConfig::from_json(&a.to_json()).unwrap();
        assert_eq!(a, again);
        let mut file: EmbodimentFile = serde_json::from_str(&a.to_json()).unwrap();
        file.neck.joints.pop();
        assert!(EmbodimentConfig::from_file_repr(file).is_err());
        let mut file: EmbodimentFile = serde_json::from_str(&a.to_json()).unwrap();
        file.left_arm.joints[0].limits_deg = [10.0, -10.0];
        assert!(EmbodimentConfig::from_file_repr(file).is_err());
        assert!(EmbodimentConfig::from_json("{").is_err());
    }

    #[test]
    fn hand_extremes() {
        let cfg = EmbodimentConfig::humanoid_a();
        let wrist = Pose::new(RotationMatrix::rot_y(-0.7), Vec3::new(0.3, -0.2, 0.1));
        for side in [Side::Left, Side::Right] {
            let open = fingertips_from_command(&[0.0; 6], &wrist, &cfg.hand_model, side);
            let cmd = retarget_hand(&open, &wrist, &cfg.hand_model, side);
            assert!(cmd[..5].iter().all(|v| *v == 0.0), "{cmd:?}");
            let closed = [wrist.translation; 5];
            let cmd = retarget_hand(&closed, &wrist, &cfg.hand_model, side);
            assert!(cmd[..5].iter().all(|v| *v == 1.0));
        }
    }

    #[test]
    fn hand_mid_flexion_matches_formula() {
        let cfg = EmbodimentConfig::humanoid_a();
        let hm = &cfg.hand_model;
        let wrist = Pose::new(RotationMatrix::rot_z(0.4), Vec3::new(0.1, 0.0, 0.2));
        let dists = [0.05, 0.1, 0.12, 0.03, 0.2];
        let dirs = [
            Vec3::new(0.6, 0.0, -0.8),
            Vec3::new(0.0, 0.0, -1.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, -1.0),
        ];
        let tips: [Vec3; 5] = std::array::from_fn(|i| wrist.transform_point(&(dirs[i] * dists[i])));
        let cmd = retarget_hand(&tips, &wrist, hm, Side::Right);
        let expected = [
            1.0 - 0.05 / 0.10,
            1.0 - 0.1 / 0.17,
            1.0 - 0.12 / 0.18,
            1.0 - 0.03 / 0.17,
            0.0,
        ];
        for i in 0..5 {
            assert!((cmd[i] - expected[i]).abs() < 1e-12, "{i}: {} vs {}", cmd[i], expected[i]);
        }
        // thumb along the reference direction: angle 0 in a [-10, 80] deg range
        assert!((cmd[5] - 10.0 / 90.0).abs() < 1e-12);
    }

    #[test]
    fn hand_monotone() {
        let cfg = EmbodimentConfig::humanoid_a();
        let wrist = Pose::identity();
        let mut last = -1.0;
        for k in 0..=40 {
            let d = 0.2 - 0.005 * k as f64;
            let tips = [Vec3::new(0.0, 0.0, -d); 5];
            let cmd = retarget_hand(&tips, &wrist, &cfg.hand_model, Side::Left);
            assert!(cmd[2] >= last);
            last = cmd[2];
        }
    }

    #[test]
    fn hand_roundtrip_random_commands() {
        let cfg = EmbodimentConfig::humanoid_b();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let cmd: HandCommand = std::array::from_fn(|i| {
                if i == 0 {
                    rng.random_range(0.0..0.95)
                } else {
                    rng.random_range(0.0..1.0)
                }
            });
            let wrist = Pose::new(sample_rotation(&mut rng), Vec3::new(0.2, 0.1, -0.3));
            for side in [Side::Left, Side::Right] {
                let tips = fingertips_from_command(&cmd, &wrist, &cfg.hand_model, side);
                let back = retarget_hand(&tips, &wrist, &cfg.hand_model, side);
                for i in 0..6 {
                    assert!((back[i] - cmd[i]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn neck_from_pure_yaw() {
        let head = RotationMatrix::rot_z(30f64.to_radians());
        let n = neck_from_head(&head);
        assert!((n[0] - 30f64.to_radians()).abs() < 1e-12);
        assert!(n[1].abs() < 1e-12);
        let cfg = EmbodimentConfig::humanoid_a();
        let mut cmd = RobotCommand::zeros(&cfg);
        cmd.left_arm[3] = 1.0;
        cmd.right_arm[3] = 1.0;
        let mut state = embed_robot_state(&cmd, &cfg).unwrap();
        state.head_rot = head.to_rot6d();
        let (out, diag) = retarget_action(&state, &cfg, &cmd, &IkParams::default()).unwrap();
        assert!((out.neck[0] - 30f64.to_radians()).abs() < 1e-12);
        assert!(out.neck[1].abs() < 1e-12);
        assert!(!diag.neck_clamped);
    }

    #[test]
    fn embed_zero_command() {
        let cfg = EmbodimentConfig::humanoid_a();
        let cmd = RobotCommand::zeros(&cfg);
        let s = embed_robot_state(&cmd, &cfg).unwrap();
        let fk = cfg.left_arm.forward_kinematics(&cmd.left_arm).unwrap();
        assert_eq!(s.left_wrist_pos, fk.translation);
        for (i, tip) in s.hand_fingertips(Side::Left).iter().enumerate() {
            let d = (tip - fk.translation).norm();
            assert!((d - cfg.hand_model.fingers[i].extent_m).abs() < 1e-12);
        }
        s.validate(crate::unified::DEFAULT_FINGERTIP_BOUND).unwrap();
    }

    #[test]
    fn retarget_embed_is_fixed_point() {
        for cfg in [EmbodimentConfig::humanoid_a(), EmbodimentConfig::humanoid_b()] {
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            for _ in 0..50 {
                let mut cmd = RobotCommand::zeros(&cfg);
                for side in [Side::Left, Side::Right] {
                    let q: Vec<f64> = cfg
                        .arm(side)
                        .limits()
                        .map(|(lo, hi)| rng.random_range(lo..hi))
                        .collect();
                    match side {
                        Side::Left => cmd.left_arm = q,
                        Side::Right => cmd.right_arm = q,
                    }
                }
                cmd.neck = [rng.random_range(-1.0..1.0), rng.random_range(-0.5..1.0)];
                cmd.left_hand = std::array::from_fn(|_| rng.random_range(0.0..0.9));
                cmd.right_hand = std::array::from_fn(|_| rng.random_range(0.0..0.9));
                cmd.validate(&cfg).unwrap();
                let s = embed_robot_state(&cmd, &cfg).unwrap();
                let (out, diag) = retarget_action(&s, &cfg, &cmd, &IkParams::default()).unwrap();
                assert_eq!(out.left_arm, cmd.left_arm);
                assert_eq!(out.right_arm, cmd.right_arm);
                assert!((out.neck[0] - cmd.neck[0]).abs() < 1e-9);
                assert!((out.neck[1] - cmd.neck[1]).abs() < 1e-9);
                for i in 0..6 {
                    assert!((out.left_hand[i] - cmd.left_hand[i]).abs() < 1e-6);
                    assert!((out.right_hand[i] - cmd.right_hand[i]).abs() < 1e-6);
                }
                assert_eq!(diag.left.status, IkStatus::Converged);
            }
        }
    }

    #[test]
    fn retarget_rejects_non_finite() {
        let cfg = EmbodimentConfig::humanoid_a();
        let cmd = RobotCommand::zeros(&cfg);
        let mut s = embed_robot_state(&cmd, &cfg).unwrap();
        s.left_wrist_pos.x = f64::NAN;
        assert!(matches!(
            retarget_action(&s, &cfg, &cmd, &IkParams::default()),
            Err(KinematicsError::RetargetFailure(_))
        ));
    }

    #[test]
    fn command_flat_roundtrip() {
        let cfg = EmbodimentConfig::humanoid_b();
        let mut cmd = RobotCommand::zeros(&cfg);
        cmd.right_arm[6] = 0.3;
        cmd.neck = [0.1, 0.2];
        cmd.right_hand[5] = 0.7;
        let flat = cmd.to_flat();
        assert_eq!(flat.len(), 28);
        assert_eq!(RobotCommand::from_flat(&flat, 7).unwrap(), cmd);
    }
}
