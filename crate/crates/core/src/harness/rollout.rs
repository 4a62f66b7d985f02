//! Closed-loop kinematic rollout: the plant executes joint commands exactly
//! and reports their forward kinematics back to the policy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::task::SyntheticTask;
use super::HarnessError;
use crate::dataset::EpisodeFrame;
use crate::geometry::Vec3;
use crate::kinematics::{embed_robot_state, retarget_action, EmbodimentConfig, IkParams, IkStatus, RobotCommand};
use crate::policy::PolicyModel;
use crate::unified::{UnifiedState, STATE_DIM};

/// What the policy sees as proprioception.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateAdapter {
    /// The 54-d unified state for every embodiment.
    #[default]
    Unified,
    /// Robots report their flat joint vector zero-padded to 54 values;
    /// humans keep the unified state.
    JointSpace,
}

pub fn pad_joints(joints: &[f64]) -> Result<Vec<f64>, HarnessError> {
    if joints.len() > STATE_DIM {
        return Err(HarnessError::InvalidTask(format!(
            "{} joints do not fit a {STATE_DIM}-d state",
            joints.len()
        )));
    }
    let mut v = joints.to_vec();
    v.resize(STATE_DIM, 0.0);
    Ok(v)
}

impl StateAdapter {
    pub fn robot_state(&self, cmd: &RobotCommand, config: &EmbodimentConfig) -> Result<Vec<f64>, HarnessError> {
        match self {
            StateAdapter::Unified => Ok(embed_robot_state(cmd, config)?.to_vector().to_vec()),
            StateAdapter::JointSpace => pad_joints(&cmd.to_flat()),
        }
    }

    /// Proprio input of a dataset frame; frames without joints are human.
    pub fn frame_state(&self, frame: &EpisodeFrame) -> Vec<f64> {
        match self {
            StateAdapter::JointSpace if !frame.joints.is_empty() => {
                let mut v = frame.joints.clone();
                v.resize(STATE_DIM, 0.0);
                v
            }
            _ => frame.state.to_vector().to_vec(),
        }
    }
}

pub struct Observation<'a> {
    pub step: usize,
    /// Proprio input as produced by the rollout's [`StateAdapter`].
    pub state: &'a [f64],
    pub unified: &'a UnifiedState,
    pub feature: &'a [f64],
}

/// Anything that maps an observation to a chunk of unified actions.
pub trait ChunkPolicy {
    fn chunk(&self, obs: &Observation<'_>) -> Result<Vec<UnifiedState>, HarnessError>;
}

pub struct ModelPolicy<'a> {
    pub model: &'a PolicyModel,
    pub tag: String,
}

impl ChunkPolicy for ModelPolicy<'_> {
    fn chunk(&self, obs: &Observation<'_>) -> Result<Vec<UnifiedState>, HarnessError> {
        Ok(self.model.predict(obs.state, obs.feature, &self.tag)?.actions)
    }
}

/// Replays a reference trajectory: at step `s` it returns states
/// `s+1 .. s+k`, holding the last one past the end.
pub struct ReplayPolicy {
    pub states: Vec<UnifiedState>,
    pub k: usize,
}

impl ChunkPolicy for ReplayPolicy {
    fn chunk(&self, obs: &Observation<'_>) -> Result<Vec<UnifiedState>, HarnessError> {
        let last = self.states.len() - 1;
        Ok((1..=self.k).map(|i| self.states[(obs.step + i).min(last)]).collect())
    }
}

/// Commands the current state forever.
pub struct HoldPolicy {
    pub k: usize,
}

impl ChunkPolicy for HoldPolicy {
    fn chunk(&self, obs: &Observation<'_>) -> Result<Vec<UnifiedState>, HarnessError> {
        Ok(vec![*obs.unified; self.k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSettings {
    pub max_steps: usize,
    /// Actions executed per policy query; 0 means half the chunk.
    pub replan_every: usize,
    pub ik: IkParams,
    pub adapter: StateAdapter,
    pub tag: String,
    pub feature_seed: u64,
}

impl Default for RolloutSettings {
    fn default() -> Self {
        Self {
            max_steps: 150,
            replan_every: 0,
            ik: IkParams {
                orientation_weight: 0.02,
                ..IkParams::default()
            },
            adapter: StateAdapter::Unified,
            tag: String::new(),
            feature_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub success: bool,
    pub steps: usize,
    /// Distance between commanded and executed right wrist position per
    /// step, meters.
    pub tracking_error: Vec<f64>,
    /// Commanded right wrist displacement per step, meters.
    pub commanded_displacement: Vec<f64>,
    pub clamp_events: Vec<usize>,
    /// `[left, right]` arm IK status per step.
    pub ik_statuses: Vec<[IkStatus; 2]>,
    /// Steps whose action could not be retargeted; the previous command was
    /// kept.
    pub retarget_errors: Vec<(usize, String)>,
    /// Right wrist distance to the goal when the rollout stopped.
    pub final_goal_error: f64,
}

impl RolloutResult {
    pub fn mean_tracking_error(&self) -> f64 {
        if self.tracking_error.is_empty() {
            return 0.0;
        }
        self.tracking_error.iter().sum::<f64>() / self.tracking_error.len() as f64
    }

    pub fn max_tracking_error(&self) -> f64 {
        self.tracking_error.iter().fold(0.0, |a, b| a.max(*b))
    }
}

/// Runs `policy` from the task's home posture until the right wrist is within
/// tolerance of `goal` or `max_steps` actions have been executed.
pub fn rollout(
    policy: &dyn ChunkPolicy,
    config: &EmbodimentConfig,
    task: &SyntheticTask,
    goal: &Vec3,
    settings: &RolloutSettings,
) -> Result<RolloutResult, HarnessError> {
    settings.ik.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.feature_seed);
    let mut cmd = task.home_command(config);
    let mut current = embed_robot_state(&cmd, config)?;
    let mut result = RolloutResult {
        success: task.goal_reached(&current, goal),
        steps: 0,
        tracking_error: Vec::new(),
        commanded_displacement: Vec::new(),
        clamp_events: Vec::new(),
        ik_statuses: Vec::new(),
        retarget_errors: Vec::new(),
        final_goal_error: (current.right_wrist_pos - goal).norm(),
    };
    let mut last_commanded = current.right_wrist_pos;
    while !result.success && result.steps < settings.max_steps {
        let state = settings.adapter.robot_state(&cmd, config)?;
        let feature = task.features(goal, &mut rng);
        let chunk = policy.chunk(&Observation {
            step: result.steps,
            state: &state,
            unified: &current,
            feature: &feature,
        })?;
        if chunk.is_empty() {
            return Err(HarnessError::EmptyChunk);
        }
        let execute = match settings.replan_every {
            0 => chunk.len().div_ceil(2),
            n => n.min(chunk.len()),
        };
        for action in &chunk[..execute] {
            match retarget_action(action, config, &cmd, &settings.ik) {
                Ok((next, diag)) => {
                    cmd = next;
                    result.clamp_events.push(diag.clamp_events());
                    result.ik_statuses.push([diag.left.status, diag.right.status]);
                }
                Err(e) => {
                    result.retarget_errors.push((result.steps, e.to_string()));
                    result.clamp_events.push(0);
                    result.ik_statuses.push([IkStatus::BestEffort; 2]);
                }
            }
            current = embed_robot_state(&cmd, config)?;
            result.tracking_error.push((action.right_wrist_pos - current.right_wrist_pos).norm());
            result.commanded_displacement.push((action.right_wrist_pos - last_commanded).norm());
            last_commanded = action.right_wrist_pos;
            result.steps += 1;
            result.final_goal_error = (current.right_wrist_pos - goal).norm();
            if task.goal_reached(&current, goal) {
                result.success = true;
                break;
            }
            if result.steps == settings.max_steps {
                break;
            }
        }
    }
    Ok(result)
}
