//! Co-training experiment, state-space/retiming ablation and the end-to-end
//! reach benchmark, all on the synthetic reach task.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::rollout::{rollout, ModelPolicy, RolloutResult, RolloutSettings, StateAdapter};
use super::task::{SyntheticTask, HUMAN_TAG};
use super::HarnessError;
use crate::dataset::{extract_pairs_with, ingest, DemonstrationEpisode, IngestOptions, MixedSampler};
use crate::geometry::Vec3;
use crate::kinematics::EmbodimentConfig;
use crate::par::{self, Execution};
use crate::policy::{train, PairSet, PolicyConfig, PolicyModel};
use crate::unified::{compute_stats, NormalizationMode, NormalizationStats};

/// Settings shared by every experiment; a serialized copy is enough to
/// reproduce a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommonSettings {
    pub task: SyntheticTask,
    pub embodiment: String,
    pub policy: PolicyConfig,
    pub train_steps: u64,
    /// Held-out goals inside the robot cells, per seed.
    pub id_goals: usize,
    /// Held-out goals per cell without robot data, per seed.
    pub ood_goals_per_cell: usize,
    pub rollout: RolloutSettings,
    /// Lower bound on normalization standard deviations.
    pub normalization_epsilon: f64,
    pub parallel: bool,
}

impl Default for CommonSettings {
    fn default() -> Self {
        Self {
            task: SyntheticTask::default(),
            embodiment: "humanoid_a".into(),
            policy: PolicyConfig {
                feature_dim: 8,
                hidden_layers: vec![64, 64],
                chunk_length: 10,
                learning_rate: 0.5,
                decay_steps: 8000,
                final_lr_fraction: 0.02,
                batch_size: 32,
                grad_clip: 1.0,
                ..PolicyConfig::default()
            },
            train_steps: 8000,
            id_goals: 4,
            ood_goals_per_cell: 2,
            rollout: RolloutSettings::default(),
            normalization_epsilon: 1e-2,
            parallel: true,
        }
    }
}

impl CommonSettings {
    fn config(&self) -> Result<EmbodimentConfig, HarnessError> {
        EmbodimentConfig::builtin(&self.embodiment)
            .ok_or_else(|| HarnessError::InvalidTask(format!("unknown embodiment {:?}", self.embodiment)))
    }

    fn execution(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    fn policy_config(&self, seed: u64) -> PolicyConfig {
        PolicyConfig {
            feature_dim: self.task.feature_dim,
            seed,
            ..self.policy.clone()
        }
    }
}

/// Independent sub-seed for `(seed, stream, index)`.
pub fn derive_seed(seed: u64, stream: &str, index: u64) -> u64 {
    let d = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(stream.as_bytes())
        .chain_update(index.to_le_bytes())
        .finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Robot demonstrations cycling over the robot cells.
pub fn robot_episodes(
    common: &CommonSettings,
    config: &EmbodimentConfig,
    seed: u64,
    n: usize,
) -> Result<Vec<DemonstrationEpisode>, HarnessError> {
    let task = &common.task;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "robot-goals", 0));
    let goals: Vec<Vec3> = (0..n)
        .map(|i| task.goal_in_cell(task.robot_cells[i % task.robot_cells.len()], &mut rng))
        .collect();
    let out = par::map_with(common.execution(), &(0..n).collect::<Vec<_>>(), |&i| {
        let raw = task.robot_capture(config, &goals[i], &format!("robot_{seed}_{i:03}"), derive_seed(seed, "robot-features", i as u64))?;
        Ok(ingest(&raw, Some(config), &IngestOptions::default())?)
    });
    out.into_iter().collect()
}

/// Human demonstrations over the widened workspace.
pub fn human_episodes(
    common: &CommonSettings,
    config: &EmbodimentConfig,
    seed: u64,
    n: usize,
    retime: bool,
) -> Result<Vec<DemonstrationEpisode>, HarnessError> {
    let task = &common.task;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "human-goals", 0));
    let goals: Vec<Vec3> = (0..n).map(|_| task.human_goal(&mut rng)).collect();
    let options = IngestOptions {
        retime,
        alpha: task.human_speedup,
        out_rate: task.rate,
        ..IngestOptions::default()
    };
    let out = par::map_with(common.execution(), &(0..n).collect::<Vec<_>>(), |&i| {
        let raw = task.human_capture(config, &goals[i], &format!("human_{seed}_{i:03}"), derive_seed(seed, "human-capture", i as u64))?;
        Ok(ingest(&raw, Some(config), &options)?)
    });
    out.into_iter().collect()
}

/// Training pairs and normalization statistics for a set of episodes.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub pairs: PairSet,
    pub state_stats: NormalizationStats,
    pub action_stats: NormalizationStats,
}

/// Unified states share one set of statistics; joint-space states are
/// normalized per embodiment. Actions always share statistics.
pub fn training_set(
    episodes: &[&DemonstrationEpisode],
    chunk: usize,
    adapter: StateAdapter,
    epsilon: f64,
) -> Result<TrainingSet, HarnessError> {
    let mut pairs = PairSet::new();
    let mut states = Vec::new();
    let mut actions = Vec::new();
    for ep in episodes {
        pairs
            .entry(ep.embodiment_tag.clone())
            .or_default()
            .extend(extract_pairs_with(ep, chunk, 1, |f| adapter.frame_state(f))?);
        for f in &ep.frames {
            states.push((ep.embodiment_tag.as_str(), adapter.frame_state(f)));
            actions.push((ep.embodiment_tag.as_str(), f.state.to_vector()));
        }
    }
    let mode = match adapter {
        StateAdapter::Unified => NormalizationMode::Shared,
        StateAdapter::JointSpace => NormalizationMode::PerEmbodiment,
    };
    let state_stats = compute_stats(states.iter().map(|(t, v)| (*t, v.as_slice())), mode, epsilon)?;
    let action_stats = compute_stats(
        actions.iter().map(|(t, v)| (*t, v.as_slice())),
        NormalizationMode::Shared,
        epsilon,
    )?;
    Ok(TrainingSet {
        pairs,
        state_stats,
        action_stats,
    })
}

/// Trains a fresh policy; human pairs are drawn `human_weight` times as often
/// as robot pairs.
pub fn train_on(
    common: &CommonSettings,
    set: &TrainingSet,
    human_weight: f64,
    seed: u64,
) -> Result<PolicyModel, HarnessError> {
    let mut model = PolicyModel::new(
        common.policy_config(seed),
        set.state_stats.clone(),
        set.action_stats.clone(),
    )?;
    let sizes: BTreeMap<String, usize> = set.pairs.iter().map(|(k, v)| (k.clone(), v.len())).collect();
    let weights = sizes
        .keys()
        .map(|k| (k.clone(), if k == HUMAN_TAG { human_weight } else { 1.0 }))
        .collect();
    let mut sampler = MixedSampler::new(&sizes, &weights, seed)?;
    train(&mut model, &set.pairs, &mut sampler, common.train_steps, 0)?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub id_success: f64,
    pub ood_success: f64,
    pub mean_tracking_error_m: f64,
    /// Variance of the per-step commanded wrist displacement, pooled over
    /// all rollouts, m^2.
    pub displacement_variance: f64,
}

/// Held-out goals for `seed`: `id_goals` in the robot cells, then
/// `ood_goals_per_cell` in every other cell.
pub fn evaluation_goals(common: &CommonSettings, seed: u64) -> (Vec<Vec3>, Vec<Vec3>) {
    let task = &common.task;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "eval-goals", 0));
    let id = (0..common.id_goals)
        .map(|i| task.goal_in_cell(task.robot_cells[i % task.robot_cells.len()], &mut rng))
        .collect();
    let ood = task
        .ood_cells()
        .into_iter()
        .flat_map(|c| std::iter::repeat_n(c, common.ood_goals_per_cell))
        .map(|c| task.goal_in_cell(c, &mut rng))
        .collect();
    (id, ood)
}

fn variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

pub fn evaluate(
    common: &CommonSettings,
    config: &EmbodimentConfig,
    model: &PolicyModel,
    adapter: StateAdapter,
    seed: u64,
) -> Result<Evaluation, HarnessError> {
    let (id, ood) = evaluation_goals(common, seed);
    let policy = ModelPolicy {
        model,
        tag: config.name.clone(),
    };
    let run = |goals: &[Vec3], stream: &str| -> Result<Vec<RolloutResult>, HarnessError> {
        goals
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let settings = RolloutSettings {
                    adapter,
                    tag: config.name.clone(),
                    feature_seed: derive_seed(seed, stream, i as u64),
                    ..common.rollout.clone()
                };
                rollout(&policy, config, &common.task, g, &settings)
            })
            .collect()
    };
    let id_runs = run(&id, "eval-id")?;
    let ood_runs = run(&ood, "eval-ood")?;
    let rate = |rs: &[RolloutResult]| {
        if rs.is_empty() {
            0.0
        } else {
            rs.iter().filter(|r| r.success).count() as f64 / rs.len() as f64
        }
    };
    let all: Vec<&RolloutResult> = id_runs.iter().chain(&ood_runs).collect();
    let tracking: Vec<f64> = all.iter().flat_map(|r| r.tracking_error.iter().copied()).collect();
    let displacement: Vec<f64> = all.iter().flat_map(|r| r.commanded_displacement.iter().copied()).collect();
    Ok(Evaluation {
        id_success: rate(&id_runs),
        ood_success: rate(&ood_runs),
        mean_tracking_error_m: if tracking.is_empty() {
            0.0
        } else {
            tracking.iter().sum::<f64>() / tracking.len() as f64
        },
        displacement_variance: variance(&displacement),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CotrainingSettings {
    #[serde(flatten)]
    pub common: CommonSettings,
    pub robot_counts: Vec<usize>,
    pub human_demos: usize,
    pub human_weight: f64,
    pub seeds: Vec<u64>,
}

impl Default for CotrainingSettings {
    fn default() -> Self {
        Self {
            common: CommonSettings::default(),
            robot_counts: vec![4, 8, 16, 32],
            human_demos: 150,
            human_weight: 1.0,
            seeds: (0..5).collect(),
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub condition: String,
    pub robot_demos: usize,
    pub seed: u64,
    pub id_success: f64,
    pub ood_success: f64,
    pub mean_tracking_error_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotrainingSummary {
    pub configurations: usize,
    /// Configurations where co-training's O.O.D. success is at least the
    /// robot-only one.
    pub ood_not_worse: usize,
    pub ood_not_worse_fraction: f64,
    pub smallest_count: usize,
    /// Seeds at the smallest robot count where co-training is strictly better
    /// on O.O.D. goals.
    pub smallest_count_strict_wins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotrainingReport {
    pub settings: CotrainingSettings,
    pub rows: Vec<ExperimentRow>,
    pub summary: CotrainingSummary,
}

pub const ROBOT_ONLY: &str = "robot_only";
pub const CO_TRAINED: &str = "co_trained";

/// For each seed and robot demo count, trains robot-only and co-trained
/// policies and scores them on held-out goals inside and outside the robot
/// cells.
pub fn cotraining_experiment(settings: &CotrainingSettings) -> Result<CotrainingReport, HarnessError> {
    let common = &settings.common;
    common.task.validate()?;
    if settings.robot_counts.is_empty() || settings.robot_counts.contains(&0) || settings.seeds.is_empty() {
        return Err(HarnessError::InvalidTask("robot counts must be positive and seeds non-empty".into()));
    }
    let config = common.config()?;
    let k = common.policy.chunk_length;
    let max_robot = *settings.robot_counts.iter().max().expect("non-empty");
    let mut rows = Vec::new();
    for &seed in &settings.seeds {
        let robot = robot_episodes(common, &config, seed, max_robot)?;
        let human = human_episodes(common, &config, seed, settings.human_demos, true)?;
        let jobs: Vec<(usize, bool)> = settings
            .robot_counts
            .iter()
            .flat_map(|&n| [(n, false), (n, true)])
            .collect();
        let results = par::map_with(common.execution(), &jobs, |&(n, cotrain)| {
            let mut eps: Vec<&DemonstrationEpisode> = robot[..n].iter().collect();
            if cotrain {
                eps.extend(&human);
            }
            let set = training_set(&eps, k, StateAdapter::Unified, common.normalization_epsilon)?;
            let model = train_on(common, &set, settings.human_weight, seed)?;
            evaluate(common, &config, &model, StateAdapter::Unified, seed)
        });
        for ((n, cotrain), r) in jobs.into_iter().zip(results) {
            let e = r?;
            rows.push(ExperimentRow {
                condition: if cotrain { CO_TRAINED } else { ROBOT_ONLY }.into(),
                robot_demos: n,
                seed,
                id_success: e.id_success,
                ood_success: e.ood_success,
                mean_tracking_error_m: e.mean_tracking_error_m,
            });
        }
    }
    let summary = summarize_cotraining(&rows);
    Ok(CotrainingReport {
        settings: settings.clone(),
        rows,
        summary,
    })
}

pub fn summarize_cotraining(rows: &[ExperimentRow]) -> CotrainingSummary {
    let mut by_key: BTreeMap<(usize, u64), [Option<f64>; 2]> = BTreeMap::new();
    for r in rows {
        let slot = usize::from(r.condition == CO_TRAINED);
        by_key.entry((r.robot_demos, r.seed)).or_default()[slot] = Some(r.ood_success);
    }
    let smallest = by_key.keys().map(|k| k.0).min().unwrap_or(0);
    let mut configurations = 0;
    let mut not_worse = 0;
    let mut strict = 0;
    for (&(n, _), v) in &by_key {
        if let [Some(robot), Some(co)] = *v {
            configurations += 1;
            not_worse += usize::from(co >= robot);
            strict += usize::from(n == smallest && co > robot);
        }
    }
    CotrainingSummary {
        configurations,
        ood_not_worse: not_worse,
        ood_not_worse_fraction: if configurations == 0 {
            0.0
        } else {
            not_worse as f64 / configurations as f64
        },
        smallest_count: smallest,
        smallest_count_strict_wins: strict,
    }
}

/// Plot-ready CSV of the experiment rows.
pub fn rows_to_csv(rows: &[ExperimentRow]) -> String {
    let mut s = String::from("condition,robot_demos,seed,id_success,ood_success,mean_tracking_error_m\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.condition, r.robot_demos, r.seed, r.id_success, r.ood_success, r.mean_tracking_error_m
        ));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationCondition {
    UnifiedRetimed,
    UnifiedNotRetimed,
    JointSpaceRetimed,
}

impl AblationCondition {
    pub const ALL: [AblationCondition; 3] = [
        AblationCondition::UnifiedRetimed,
        AblationCondition::UnifiedNotRetimed,
        AblationCondition::JointSpaceRetimed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationCondition::UnifiedRetimed => "unified_retimed",
            AblationCondition::UnifiedNotRetimed => "unified_not_retimed",
            AblationCondition::JointSpaceRetimed => "joint_space_retimed",
        }
    }

    fn adapter(self) -> StateAdapter {
        match self {
            AblationCondition::JointSpaceRetimed => StateAdapter::JointSpace,
            _ => StateAdapter::Unified,
        }
    }

    fn retimed(self) -> bool {
        self != AblationCondition::UnifiedNotRetimed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSettings {
    #[serde(flatten)]
    pub common: CommonSettings,
    pub robot_demos: usize,
    pub human_demos: usize,
    /// Human-heavy mixes use a weight above 1.
    pub human_weight: f64,
    pub seeds: Vec<u64>,
}

impl Default for AblationSettings {
    fn default() -> Self {
        Self {
            common: CommonSettings::default(),
            robot_demos: 8,
            human_demos: 150,
            human_weight: 3.0,
            seeds: (0..5).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub condition: AblationCondition,
    pub seed: u64,
    pub id_success: f64,
    pub ood_success: f64,
    pub displacement_variance: f64,
    pub mean_tracking_error_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub seeds: usize,
    /// Seeds where the not-retimed condition has strictly higher commanded
    /// displacement variance than the retimed one.
    pub not_retimed_higher_variance: usize,
    /// Seeds where unified-space O.O.D. success is at least the joint-space one.
    pub unified_not_worse_than_joint_space: usize,
    /// Seeds where retimed+unified is at least as good as both ablations on
    /// O.O.D. goals.
    pub retimed_unified_not_worse_than_both: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub settings: AblationSettings,
    pub rows: Vec<AblationRow>,
    pub summary: AblationSummary,
}

/// Trains the three state-space/retiming conditions per seed on the same
/// human-heavy mix and compares them.
pub fn ablation_suite(settings: &AblationSettings) -> Result<AblationReport, HarnessError> {
    let common = &settings.common;
    common.task.validate()?;
    let config = common.config()?;
    let k = common.policy.chunk_length;
    let mut rows = Vec::new();
    for &seed in &settings.seeds {
        let robot = robot_episodes(common, &config, seed, settings.robot_demos)?;
        let retimed = human_episodes(common, &config, seed, settings.human_demos, true)?;
        let raw_timing = human_episodes(common, &config, seed, settings.human_demos, false)?;
        let results = par::map_with(common.execution(), &AblationCondition::ALL, |&c| {
            let human = if c.retimed() { &retimed } else { &raw_timing };
            let eps: Vec<&DemonstrationEpisode> = robot.iter().chain(human).collect();
            let set = training_set(&eps, k, c.adapter(), common.normalization_epsilon)?;
            let model = train_on(common, &set, settings.human_weight, seed)?;
            evaluate(common, &config, &model, c.adapter(), seed)
        });
        for (c, r) in AblationCondition::ALL.into_iter().zip(results) {
            let e = r?;
            rows.push(AblationRow {
                condition: c,
                seed,
                id_success: e.id_success,
                ood_success: e.ood_success,
                displacement_variance: e.displacement_variance,
                mean_tracking_error_m: e.mean_tracking_error_m,
            });
        }
    }
    let summary = summarize_ablation(&rows);
    Ok(AblationReport {
        settings: settings.clone(),
        rows,
        summary,
    })
}

pub fn ablation_rows_to_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("condition,seed,id_success,ood_success,displacement_variance,mean_tracking_error_m\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.condition.name(),
            r.seed,
            r.id_success,
            r.ood_success,
            r.displacement_variance,
            r.mean_tracking_error_m
        ));
    }
    s
}

pub fn summarize_ablation(rows: &[AblationRow]) -> AblationSummary {
    let mut by_seed: BTreeMap<u64, BTreeMap<AblationCondition, &AblationRow>> = BTreeMap::new();
    for r in rows {
        by_seed.entry(r.seed).or_default().insert(r.condition, r);
    }
    let mut s = AblationSummary {
        seeds: 0,
        not_retimed_higher_variance: 0,
        unified_not_worse_than_joint_space: 0,
        retimed_unified_not_worse_than_both: 0,
    };
    for m in by_seed.values() {
        let (Some(ur), Some(un), Some(js)) = (
            m.get(&AblationCondition::UnifiedRetimed),
            m.get(&AblationCondition::UnifiedNotRetimed),
            m.get(&AblationCondition::JointSpaceRetimed),
        ) else {
            continue;
        };
        s.seeds += 1;
        s.not_retimed_higher_variance += usize::from(un.displacement_variance > ur.displacement_variance);
        s.unified_not_worse_than_joint_space += usize::from(ur.ood_success >= js.ood_success);
        s.retimed_unified_not_worse_than_both +=
            usize::from(ur.ood_success >= un.ood_success && ur.ood_success >= js.ood_success);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReachSettings {
    #[serde(flatten)]
    pub common: CommonSettings,
    /// Robot demonstrations spread over every cell.
    pub robot_demos: usize,
    pub train_seed: u64,
    pub eval_seeds: Vec<u64>,
}

impl Default for ReachSettings {
    fn default() -> Self {
        Self {
            common: CommonSettings::default(),
            robot_demos: 72,
            train_seed: 0,
            eval_seeds: (100..110).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachReport {
    pub goals: Vec<[f64; 3]>,
    pub successes: Vec<bool>,
    pub final_goal_errors: Vec<f64>,
    /// Worst tracking error of oracle replays of the held-out goals.
    pub oracle_max_tracking_error_m: f64,
    pub final_loss: f64,
}

/// Trains on robot demonstrations covering the whole grid and rolls out one
/// held-out goal per evaluation seed.
pub fn reach_benchmark(settings: &ReachSettings) -> Result<(PolicyModel, ReachReport), HarnessError> {
    let mut common = settings.common.clone();
    common.task.robot_cells = (0..common.task.cell_count()).collect();
    common.task.validate()?;
    let config = common.config()?;
    let robot = robot_episodes(&common, &config, settings.train_seed, settings.robot_demos)?;
    let eps: Vec<&DemonstrationEpisode> = robot.iter().collect();
    let set = training_set(&eps, common.policy.chunk_length, StateAdapter::Unified, common.normalization_epsilon)?;
    let mut model = PolicyModel::new(
        common.policy_config(settings.train_seed),
        set.state_stats.clone(),
        set.action_stats.clone(),
    )?;
    let sizes: BTreeMap<String, usize> = set.pairs.iter().map(|(k, v)| (k.clone(), v.len())).collect();
    let mut sampler = MixedSampler::proportional(&sizes, settings.train_seed)?;
    let report = train(&mut model, &set.pairs, &mut sampler, common.train_steps, 0)?;

    let goals: Vec<Vec3> = settings
        .eval_seeds
        .iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(s, "reach-goal", 0));
            let (x, y) = (common.task.x_range, common.task.y_range);
            Vec3::new(rng.random_range(x[0]..x[1]), rng.random_range(y[0]..y[1]), common.task.goal_height)
        })
        .collect();
    let policy = ModelPolicy {
        model: &model,
        tag: config.name.clone(),
    };
    let mut successes = Vec::new();
    let mut errors = Vec::new();
    let mut oracle_max: f64 = 0.0;
    for (g, &s) in goals.iter().zip(&settings.eval_seeds) {
        let rs = RolloutSettings {
            tag: config.name.clone(),
            feature_seed: derive_seed(s, "reach-features", 0),
            ..common.rollout.clone()
        };
        let r = rollout(&policy, &config, &common.task, g, &rs)?;
        successes.push(r.success);
        errors.push(r.final_goal_error);
        let reference = common.task.robot_reference(&config, g)?;
        let oracle = super::rollout::ReplayPolicy {
            states: reference.states,
            k: common.policy.chunk_length,
        };
        let o = rollout(
            &oracle,
            &config,
            &common.task,
            g,
            &RolloutSettings {
                max_steps: reference.t.len() + common.policy.chunk_length,
                ..rs
            },
        )?;
        oracle_max = oracle_max.max(o.max_tracking_error());
    }
    Ok((
        model,
        ReachReport {
            goals: goals.iter().map(|g| [g.x, g.y, g.z]).collect(),
            successes,
            final_goal_errors: errors,
            oracle_max_tracking_error_m: oracle_max,
            final_loss: report.final_loss.total,
        },
    ))
}
