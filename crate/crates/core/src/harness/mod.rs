//! Simulated closed-loop evaluation on a desk-scale reach task, plus the
//! co-training and ablation experiments built on it.

pub mod cli;
mod experiment;
mod rollout;
mod task;

use thiserror::Error;

pub use experiment::{
    ablation_rows_to_csv, ablation_suite, cotraining_experiment, derive_seed, evaluate, evaluation_goals, human_episodes,
    reach_benchmark, robot_episodes, rows_to_csv, summarize_ablation, summarize_cotraining,
    train_on, training_set, AblationCondition, AblationReport, AblationRow, AblationSettings,
    AblationSummary, CommonSettings, CotrainingReport, CotrainingSettings, CotrainingSummary,
    Evaluation, ExperimentRow, ReachReport, ReachSettings, TrainingSet, CO_TRAINED, ROBOT_ONLY,
};
pub use rollout::{
    pad_joints, rollout, ChunkPolicy, HoldPolicy, ModelPolicy, Observation, ReplayPolicy,
    RolloutResult, RolloutSettings, StateAdapter,
};
pub use task::{RobotReference, SyntheticTask, HUMAN_TAG};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("goal {goal:?} unreachable (IK error {error} m)")]
    Unreachable { goal: [f64; 3], error: f64 },
    #[error("policy returned an empty chunk")]
    EmptyChunk,
    #[error(transparent)]
    Kinematics(#[from] crate::kinematics::KinematicsError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
    #[error(transparent)]
    Unified(#[from] crate::unified::UnifiedError),
}
