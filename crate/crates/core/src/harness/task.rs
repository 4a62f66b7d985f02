//! Desk-scale reach task: move the right wrist to a point on a 3x3 grid of
//! cells in front of the body.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::dataset::{EpisodeKind, RawCapture, RawMeta, RawRecord};
use crate::geometry::{Pose, RotationMatrix, Vec3};
use crate::kinematics::{
    embed_robot_state, fingertips_from_command, ik_solve, EmbodimentConfig, IkParams, IkStatus,
    PoseFile, RobotCommand,
};
use crate::unified::{Side, UnifiedState};

/// Tag carried by every synthetic human capture.
pub const HUMAN_TAG: &str = "human";
/// Fixed seed of the goal-to-feature projection.
const PROJECTION_SEED: u64 = 0x5eed_f00d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticTask {
    pub name: String,
    /// Grid extent in the canonical frame, meters.
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub goal_height: f64,
    /// Cells per side.
    pub grid: usize,
    /// Cells (row-major, `x` index major) that robot demonstrations cover.
    pub robot_cells: Vec<usize>,
    /// Human goals are drawn from the grid grown by this margin.
    pub human_margin: f64,
    pub tolerance: f64,
    pub rate: f64,
    pub reach_s: f64,
    pub hold_s: f64,
    /// Human demonstrations run this much faster than robot ones.
    pub human_speedup: f64,
    /// Scales the start offset, wrist tilt, head sway and fingertip noise of
    /// human captures; 0 gives clean replays of the robot reference.
    pub human_variation: f64,
    pub feature_dim: usize,
    pub feature_noise: f64,
    /// Elbow flexion of the start posture, degrees.
    pub home_elbow_deg: f64,
    /// IK used to turn reference wrist paths into joint commands. The
    /// five-joint arm cannot hold a fixed wrist orientation over the whole
    /// grid, so the default solves for position only.
    pub demo_ik: IkParams,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        Self {
            name: "reach".into(),
            x_range: [0.15, 0.45],
            y_range: [-0.35, -0.05],
            goal_height: 0.2,
            grid: 3,
            robot_cells: vec![3, 4],
            human_margin: 0.03,
            tolerance: 0.02,
            rate: 30.0,
            reach_s: 2.0,
            hold_s: 1.0,
            human_speedup: 4.0,
            human_variation: 0.5,
            feature_dim: 8,
            feature_noise: 0.02,
            home_elbow_deg: 90.0,
            demo_ik: IkParams {
                orientation_weight: 0.0,
                max_iters: 200,
                pos_tol: 2e-4,
                ..IkParams::default()
            },
        }
    }
}

/// Time-indexed robot reference: commands and their unified embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotReference {
    pub goal: Vec3,
    pub t: Vec<f64>,
    pub commands: Vec<RobotCommand>,
    pub states: Vec<UnifiedState>,
}

fn min_jerk(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
}

impl SyntheticTask {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidTask(m.into()));
        if self.grid == 0 || self.robot_cells.iter().any(|c| *c >= self.grid * self.grid) {
            return bad("robot cells must lie on the grid");
        }
        if !(self.x_range[1] > self.x_range[0] && self.y_range[1] > self.y_range[0]) {
            return bad("empty goal region");
        }
        if !(self.rate > 0.0 && self.reach_s > 0.0 && self.hold_s >= 0.0 && self.human_speedup >= 1.0) {
            return bad("timing must be positive and the human speedup >= 1");
        }
        if self.feature_dim < 3 || !(self.tolerance > 0.0) || !(self.feature_noise >= 0.0) {
            return bad("feature_dim >= 3, tolerance > 0 and feature_noise >= 0 required");
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.grid * self.grid
    }

    /// Cells without robot data.
    pub fn ood_cells(&self) -> Vec<usize> {
        (0..self.cell_count()).filter(|c| !self.robot_cells.contains(c)).collect()
    }

    /// `(x_range, y_range)` of a grid cell.
    pub fn cell_bounds(&self, cell: usize) -> ([f64; 2], [f64; 2]) {
        let (i, j) = (cell / self.grid, cell % self.grid);
        let dx = (self.x_range[1] - self.x_range[0]) / self.grid as f64;
        let dy = (self.y_range[1] - self.y_range[0]) / self.grid as f64;
        let x0 = self.x_range[0] + dx * i as f64;
        let y0 = self.y_range[0] + dy * j as f64;
        ([x0, x0 + dx], [y0, y0 + dy])
    }

    pub fn cell_of(&self, goal: &Vec3) -> Option<usize> {
        (0..self.cell_count()).find(|&c| {
            let (x, y) = self.cell_bounds(c);
            (x[0]..=x[1]).contains(&goal.x) && (y[0]..=y[1]).contains(&goal.y)
        })
    }

    pub fn goal_in_cell<R: Rng + ?Sized>(&self, cell: usize, rng: &mut R) -> Vec3 {
        let (x, y) = self.cell_bounds(cell);
        Vec3::new(
            rng.random_range(x[0]..x[1]),
            rng.random_range(y[0]..y[1]),
            self.goal_height,
        )
    }

    /// Goal anywhere in the grid grown by `human_margin`.
    pub fn human_goal<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let m = self.human_margin;
        Vec3::new(
            rng.random_range(self.x_range[0] - m..self.x_range[1] + m),
            rng.random_range(self.y_range[0] - m..self.y_range[1] + m),
            self.goal_height,
        )
    }

    pub fn goal_reached(&self, state: &UnifiedState, goal: &Vec3) -> bool {
        (state.right_wrist_pos - goal).norm() <= self.tolerance
    }

    /// Start posture: every joint named `elbow` flexed, everything else zero.
    pub fn home_command(&self, config: &EmbodimentConfig) -> RobotCommand {
        let mut cmd = RobotCommand::zeros(config);
        for (arm, chain) in [
            (&mut cmd.left_arm, &config.left_arm),
            (&mut cmd.right_arm, &config.right_arm),
        ] {
            for (q, j) in arm.iter_mut().zip(chain.joints()) {
                if j.name == "elbow" {
                    *q = self.home_elbow_deg.to_radians();
                }
            }
        }
        cmd
    }

    /// Observation features: a fixed linear projection of the goal, scaled to
    /// the grid, plus Gaussian noise.
    pub fn features<R: Rng + ?Sized>(&self, goal: &Vec3, rng: &mut R) -> Vec<f64> {
        let cx = 0.5 * (self.x_range[0] + self.x_range[1]);
        let cy = 0.5 * (self.y_range[0] + self.y_range[1]);
        let hx = 0.5 * (self.x_range[1] - self.x_range[0]);
        let hy = 0.5 * (self.y_range[1] - self.y_range[0]);
        let g = [(goal.x - cx) / hx, (goal.y - cy) / hy, 1.0];
        let mut proj = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
        let noise = Normal::new(0.0, self.feature_noise).expect("finite noise");
        (0..self.feature_dim)
            .map(|i| {
                let row: Vec<f64> = (0..3).map(|_| proj.random_range(-1.0..1.0)).collect();
                // the first two features read the goal directly
                let direct = if i < 2 { g[i] } else { 0.0 };
                direct + row[0] * g[0] + row[1] * g[1] + 0.2 * row[2] * g[2] + noise.sample(rng)
            })
            .collect()
    }

    fn frame_times(&self, duration: f64) -> Vec<f64> {
        let n = (duration * self.rate).round() as usize + 1;
        (0..n).map(|i| i as f64 / self.rate).collect()
    }

    /// Robot reference: a minimum-jerk wrist path from the home posture to
    /// `goal` followed by a hold, solved frame by frame with warm-started IK.
    pub fn robot_reference(&self, config: &EmbodimentConfig, goal: &Vec3) -> Result<RobotReference, HarnessError> {
        self.reference_at(config, goal, self.frame_times(self.reach_s + self.hold_s))
    }

    fn reference_at(&self, config: &EmbodimentConfig, goal: &Vec3, t: Vec<f64>) -> Result<RobotReference, HarnessError> {
        let home = self.home_command(config);
        let chain = config.arm(Side::Right);
        let start = chain.forward_kinematics(&home.right_arm)?;
        let mut commands = Vec::with_capacity(t.len());
        let mut states = Vec::with_capacity(t.len());
        let mut cmd = home.clone();
        for &ti in &t {
            let s = min_jerk(ti / self.reach_s);
            let target = Pose::new(start.rotation, start.translation + (goal - start.translation) * s);
            let sol = ik_solve(chain, &target, &cmd.right_arm, &self.demo_ik)?;
            if sol.status == IkStatus::BestEffort && sol.position_error > 0.25 * self.tolerance {
                return Err(HarnessError::Unreachable {
                    goal: [goal.x, goal.y, goal.z],
                    error: sol.position_error,
                });
            }
            cmd.right_arm = sol.q;
            states.push(embed_robot_state(&cmd, config)?);
            commands.push(cmd.clone());
        }
        Ok(RobotReference {
            goal: *goal,
            t,
            commands,
            states,
        })
    }

    /// Teleoperation log of a robot demonstration: joint records and visual
    /// feature records, slightly offset in time.
    pub fn robot_capture(
        &self,
        config: &EmbodimentConfig,
        goal: &Vec3,
        id: &str,
        seed: u64,
    ) -> Result<RawCapture, HarnessError> {
        let reference = self.robot_reference(config, goal)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut records = Vec::with_capacity(2 * reference.t.len());
        for (t, cmd) in reference.t.iter().zip(reference.commands) {
            records.push(RawRecord {
                t: *t,
                joints: Some(cmd),
                ..RawRecord::default()
            });
            records.push(RawRecord {
                t: t + 0.004,
                feature_vector: Some(self.features(goal, &mut rng)),
                ..RawRecord::default()
            });
        }
        Ok(RawCapture {
            meta: RawMeta {
                episode_id: id.into(),
                embodiment_tag: config.name.clone(),
                kind: EpisodeKind::Robot,
                device: "teleop".into(),
                scene: self.name.clone(),
                instruction: format!("{} to ({:.3}, {:.3})", self.name, goal.x, goal.y),
            },
            records,
        })
    }

    /// VR capture of a human demonstration in an arbitrary world frame.
    /// The wrist follows the same reference path as the robot but
    /// `human_speedup` times faster, starting from a perturbed pose whose
    /// offset fades out by the end of the reach. Wrist orientations carry a
    /// small fixed tilt, the head sways and fingertips are noisy.
    pub fn human_capture(
        &self,
        config: &EmbodimentConfig,
        goal: &Vec3,
        id: &str,
        seed: u64,
    ) -> Result<RawCapture, HarnessError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reach = self.reach_s / self.human_speedup;
        let hold = self.hold_s / self.human_speedup;
        let times = self.frame_times(reach + hold);
        let reference = self.reference_at(
            config,
            goal,
            times.iter().map(|t| t * self.human_speedup).collect(),
        )?;
        let home = self.home_command(config);
        let left_home = config.left_arm.forward_kinematics(&home.left_arm)?;
        let v = self.human_variation;
        let jitter = |rng: &mut ChaCha8Rng, s: f64| {
            let s = s * v;
            if s == 0.0 {
                return Vec3::zeros();
            }
            Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
        };
        let tilt = |rng: &mut ChaCha8Rng| RotationMatrix::exp(&jitter(rng, 2f64.to_radians()));
        let start_offset = jitter(&mut rng, 0.01);
        let right_tilt = tilt(&mut rng);
        let left = Pose::new(tilt(&mut rng).compose(&left_home.rotation), left_home.translation + jitter(&mut rng, 0.01));
        let world = Pose::new(
            RotationMatrix::rot_z(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)),
            Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.8..1.2)),
        );
        let sway_amp = v * rng.random_range(0.5..2.0f64).to_radians();
        let sway_freq = rng.random_range(0.5..1.5);
        let head_height = config.canonical_frame_offset;
        let tip_noise = Normal::new(0.0, 0.003 * v).expect("finite noise");

        let mut records = Vec::new();
        for (t, state) in times.iter().zip(&reference.states) {
            let phase = 2.0 * std::f64::consts::PI * sway_freq * t;
            let head_rot = RotationMatrix::from_yaw_pitch_roll(
                sway_amp * phase.sin(),
                0.5 * sway_amp * phase.sin(),
                0.3 * sway_amp * phase.sin(),
            );
            let head = Pose::new(head_rot, Vec3::new(0.0, 0.0, head_height) + Vec3::new(0.004, 0.002, 0.0) * (v * phase.sin()));
            let wrist = state.wrist_pose(Side::Right).map_err(|e| HarnessError::InvalidTask(e.to_string()))?;
            let fade = 1.0 - min_jerk(t / reach);
            let right = Pose::new(
                right_tilt.compose(&wrist.rotation),
                wrist.translation + start_offset * fade,
            );
            let mut tips = Vec::with_capacity(10);
            for (side, pose) in [(Side::Left, &left), (Side::Right, &right)] {
                for p in fingertips_from_command(&[0.0; 6], pose, &config.hand_model, side) {
                    let p = world.transform_point(&p)
                        + Vec3::new(tip_noise.sample(&mut rng), tip_noise.sample(&mut rng), tip_noise.sample(&mut rng));
                    tips.push([p.x, p.y, p.z]);
                }
            }
            records.push(RawRecord {
                t: *t,
                head_pose: Some(PoseFile::from_pose(&world.compose(&head))),
                left_wrist_pose: Some(PoseFile::from_pose(&world.compose(&left))),
                right_wrist_pose: Some(PoseFile::from_pose(&world.compose(&right))),
                fingertips: Some(tips),
                ..RawRecord::default()
            });
            records.push(RawRecord {
                t: t + 0.004,
                feature_vector: Some(self.features(goal, &mut rng)),
                ..RawRecord::default()
            });
        }
        Ok(RawCapture {
            meta: RawMeta {
                episode_id: id.into(),
                embodiment_tag: HUMAN_TAG.into(),
                kind: EpisodeKind::Human,
                device: "vr_headset".into(),
                scene: self.name.clone(),
                instruction: format!("{} to ({:.3}, {:.3})", self.name, goal.x, goal.y),
            },
            records,
        })
    }
}
