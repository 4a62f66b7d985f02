//! `crossbody` command line. Every subcommand takes `--config` (a JSON file;
//! an embodiment for `fk`, `ik` and `retarget`, settings otherwise) plus
//! flags that override it.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    ablation_rows_to_csv, ablation_suite, cotraining_experiment, reach_benchmark, rollout, rows_to_csv,
    training_set, AblationSettings, CommonSettings, CotrainingSettings, ModelPolicy, ReachSettings, ReplayPolicy,
    RolloutSettings, StateAdapter, HUMAN_TAG,
};
use crate::dataset::{
    dataset_stats, ingest, read_dataset, update_stats, validate_dataset, write_dataset, IngestOptions, MixedSampler,
    RawCapture,
};
use crate::geometry::{Pose, RotationMatrix, Vec3};
use crate::kinematics::{ik_solve, retarget_action, EmbodimentConfig, IkParams, PoseFile, RobotCommand};
use crate::policy::{train, Checkpoint, PolicyConfig, PolicyModel};
use crate::retiming::{
    body_motion_check, retime, Frame, SlowdownFactor, Trajectory, DEFAULT_ALPHA,
};
use crate::unified::{NormalizationMode, Side, UnifiedState, STATE_DIM};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Failed(String),
}

impl<E: std::fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Failed(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage<T>(flag: &str, msg: impl std::fmt::Display) -> CliResult<T> {
    Err(CliError::Usage(format!("invalid value for {flag}: {msg}")))
}

#[derive(Parser, Debug)]
#[command(name = "crossbody", version, about = "Cross-embodiment demonstration toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SideArg {
    Left,
    Right,
    Neck,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Shared,
    PerEmbodiment,
}

impl From<ModeArg> for NormalizationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Shared => NormalizationMode::Shared,
            ModeArg::PerEmbodiment => NormalizationMode::PerEmbodiment,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Cotraining,
    Ablation,
    Reach,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ingest raw capture directories into a dataset.
    Ingest {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory whose subdirectories are raw captures.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        no_retime: bool,
    },
    /// Retime a trajectory file and report its body-motion check.
    Retime {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        rate: Option<f64>,
        /// Output trajectory file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to write the body-motion report; stderr when absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compute normalization statistics of a dataset.
    Stats {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Store the statistics in the dataset.
        #[arg(long)]
        write: bool,
    },
    /// Train a policy on a dataset and save a checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Predict an action chunk from a checkpoint.
    Predict {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        state: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        feature: Vec<f64>,
        #[arg(long)]
        tag: Option<String>,
    },
    /// Map a unified action to robot joint commands.
    Retarget {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        action: Vec<f64>,
        /// Previous command as a flat joint vector; zeros when absent.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        q_prev: Vec<f64>,
        #[arg(long)]
        orientation_weight: Option<f64>,
    },
    /// Forward kinematics of one chain.
    Fk {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        q: Vec<f64>,
        #[arg(long, value_enum, default_value = "right")]
        side: SideArg,
    },
    /// Inverse kinematics of one arm.
    Ik {
        #[arg(long)]
        config: PathBuf,
        /// `x,y,z` for a position target, `x,y,z,rx,ry,rz` with a rotation
        /// vector for a full pose.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        target: Vec<f64>,
        #[arg(long, value_enum, default_value = "right")]
        side: SideArg,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        q0: Vec<f64>,
        #[arg(long)]
        orientation_weight: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Closed-loop rollout of a checkpoint (or the oracle) on a reach goal.
    Rollout {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Replay the reference trajectory instead of a policy.
        #[arg(long)]
        oracle: bool,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        goal: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run an experiment and write its report.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        kind: ExperimentKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Check every dataset invariant.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
    },
}

/// Settings file of `ingest`, `retime` and `stats`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestSettings {
    pub alpha: f64,
    pub retime: bool,
    pub out_rate: f64,
    pub motion_threshold: f64,
    pub max_skew: Option<f64>,
    pub image_feature_dim: usize,
    /// Extra embodiment files; built-in embodiments are always known.
    pub embodiments: Vec<PathBuf>,
    pub normalization: NormalizationMode,
    pub normalization_epsilon: f64,
}

impl Default for IngestSettings {
    fn default() -> Self {
        let o = IngestOptions::default();
        Self {
            alpha: o.alpha,
            retime: o.retime,
            out_rate: o.out_rate,
            motion_threshold: o.motion_threshold,
            max_skew: o.max_skew,
            image_feature_dim: o.image_feature_dim,
            embodiments: Vec::new(),
            normalization: NormalizationMode::Shared,
            normalization_epsilon: 1e-2,
        }
    }
}

impl IngestSettings {
    fn options(&self) -> IngestOptions {
        IngestOptions {
            alpha: self.alpha,
            retime: self.retime,
            out_rate: self.out_rate,
            motion_threshold: self.motion_threshold,
            max_skew: self.max_skew,
            image_feature_dim: self.image_feature_dim,
        }
    }
}

/// Settings file of `train` and `predict`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub policy: PolicyConfig,
    pub steps: u64,
    pub adapter: StateAdapter,
    pub normalization_epsilon: f64,
    pub human_weight: f64,
    pub report_every: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let common = CommonSettings::default();
        Self {
            policy: common.policy,
            steps: common.train_steps,
            adapter: StateAdapter::Unified,
            normalization_epsilon: common.normalization_epsilon,
            human_weight: 1.0,
            report_every: 100,
        }
    }
}

/// One line of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLine {
    pub t: f64,
    pub state: Vec<f64>,
    pub head_position: [f64; 3],
}

pub fn trajectory_to_jsonl(traj: &Trajectory) -> String {
    let mut s = String::new();
    for f in traj.frames() {
        let line = TrajectoryLine {
            t: f.t,
            state: f.state.to_vector().to_vec(),
            head_position: [f.head_position.x, f.head_position.y, f.head_position.z],
        };
        s.push_str(&serde_json::to_string(&line).expect("trajectory line serializes"));
        s.push('\n');
    }
    s
}

pub fn trajectory_from_jsonl(text: &str, tag: &str, rate: f64) -> Result<Trajectory, String> {
    let mut frames = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let l: TrajectoryLine = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        let state = UnifiedState::from_vector(&l.state).map_err(|e| format!("line {}: {e}", i + 1))?;
        frames.push(Frame {
            t: l.t,
            state,
            head_position: Vec3::from(l.head_position),
        });
    }
    Trajectory::new(frames, tag, rate).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetimeReport {
    pub episode_id: String,
    pub excursion_m: f64,
    pub pass: bool,
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("--config {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("--config {}: {e}", p.display())))
        }
    }
}

/// A file path, or the name of a built-in embodiment.
fn load_embodiment(path: &Path) -> CliResult<EmbodimentConfig> {
    if !path.exists() {
        if let Some(c) = path.to_str().and_then(EmbodimentConfig::builtin) {
            return Ok(c);
        }
    }
    EmbodimentConfig::load(path).map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))
}

fn print_json<T: Serialize>(v: &T) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Failed(m)) => {
            eprintln!("error: {m}");
            EXIT_INVALID
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<i32> {
    match cmd {
        Command::Ingest {
            config,
            input,
            out,
            alpha,
            no_retime,
        } => cmd_ingest(config.as_deref(), &input, &out, alpha, no_retime),
        Command::Retime {
            config,
            input,
            alpha,
            rate,
            out,
            report,
        } => cmd_retime(config.as_deref(), &input, alpha, rate, out.as_deref(), report.as_deref()),
        Command::Stats {
            config,
            dataset,
            mode,
            epsilon,
            write,
        } => cmd_stats(config.as_deref(), &dataset, mode, epsilon, write),
        Command::Train {
            config,
            dataset,
            out,
            steps,
            seed,
            resume,
        } => cmd_train(config.as_deref(), &dataset, &out, steps, seed, resume.as_deref()),
        Command::Predict {
            config,
            checkpoint,
            state,
            feature,
            tag,
        } => {
            load_config::<TrainSettings>(config.as_deref())?;
            cmd_predict(&checkpoint, &state, &feature, tag)
        }
        Command::Retarget {
            config,
            action,
            q_prev,
            orientation_weight,
        } => cmd_retarget(&config, &action, &q_prev, orientation_weight),
        Command::Fk { config, q, side } => cmd_fk(&config, &q, side),
        Command::Ik {
            config,
            target,
            side,
            q0,
            orientation_weight,
            max_iters,
        } => cmd_ik(&config, &target, side, &q0, orientation_weight, max_iters),
        Command::Rollout {
            config,
            checkpoint,
            oracle,
            goal,
            seed,
        } => cmd_rollout(config.as_deref(), checkpoint.as_deref(), oracle, &goal, seed),
        Command::Experiment {
            config,
            kind,
            out,
            seeds,
        } => cmd_experiment(config.as_deref(), kind, &out, &seeds),
        Command::Validate { config, dataset } => {
            load_config::<IngestSettings>(config.as_deref())?;
            cmd_validate(&dataset)
        }
    }
}

fn capture_dirs(root: &Path) -> CliResult<Vec<PathBuf>> {
    if !root.is_dir() {
        return usage("--input", format!("{} is not a directory", root.display()));
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("meta.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return usage("--input", format!("no captures under {}", root.display()));
    }
    Ok(dirs)
}

fn cmd_ingest(config: Option<&Path>, input: &Path, out: &Path, alpha: Option<f64>, no_retime: bool) -> CliResult<i32> {
    let mut settings: IngestSettings = load_config(config)?;
    if let Some(a) = alpha {
        if SlowdownFactor::new(a).is_err() {
            return usage("--alpha", format!("{a} (must be a finite value > 1)"));
        }
        settings.alpha = a;
    }
    settings.retime &= !no_retime;
    let mut embodiments: BTreeMap<String, EmbodimentConfig> = ["humanoid_a", "humanoid_b"]
        .into_iter()
        .filter_map(EmbodimentConfig::builtin)
        .map(|c| (c.name.clone(), c))
        .collect();
    for p in &settings.embodiments {
        let c = load_embodiment(p)?;
        embodiments.insert(c.name.clone(), c);
    }
    let options = settings.options();
    let mut episodes = Vec::new();
    for dir in capture_dirs(input)? {
        let raw = RawCapture::load(&dir)?;
        let ep = ingest(&raw, embodiments.get(&raw.meta.embodiment_tag), &options)
            .map_err(|e| CliError::Failed(format!("{}: {e}", dir.display())))?;
        episodes.push(ep);
    }
    let stats = dataset_stats(&episodes, settings.normalization, settings.normalization_epsilon)?;
    let manifest = write_dataset(out, &episodes, Some(&stats))?;
    print_json(&manifest)?;
    Ok(EXIT_OK)
}

fn cmd_retime(
    config: Option<&Path>,
    input: &Path,
    alpha: Option<f64>,
    rate: Option<f64>,
    out: Option<&Path>,
    report: Option<&Path>,
) -> CliResult<i32> {
    let settings: IngestSettings = load_config(config)?;
    let alpha = alpha.unwrap_or(if config.is_some() { settings.alpha } else { DEFAULT_ALPHA });
    let Ok(alpha) = SlowdownFactor::new(alpha) else {
        return usage("--alpha", format!("{alpha} (must be a finite value > 1)"));
    };
    let rate = rate.unwrap_or(settings.out_rate);
    if !(rate.is_finite() && rate > 0.0) {
        return usage("--rate", rate);
    }
    let text = std::fs::read_to_string(input).map_err(|e| CliError::Usage(format!("--input {}: {e}", input.display())))?;
    let episode_id = input.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory").to_string();
    let traj = trajectory_from_jsonl(&text, HUMAN_TAG, rate).map_err(|e| CliError::Failed(format!("{}: {e}", input.display())))?;
    let check = body_motion_check(&traj, settings.motion_threshold);
    let retimed = retime(&traj, alpha, rate)?;
    let body = trajectory_to_jsonl(&retimed);
    match out {
        Some(p) => std::fs::write(p, body)?,
        None => std::io::stdout().lock().write_all(body.as_bytes())?,
    }
    let rep = RetimeReport {
        episode_id,
        excursion_m: check.excursion_m,
        pass: check.pass,
    };
    match report {
        Some(p) => std::fs::write(p, to_json(&rep) + "\n")?,
        None => eprintln!("{}", serde_json::to_string(&rep)?),
    }
    Ok(EXIT_OK)
}

fn cmd_stats(
    config: Option<&Path>,
    dataset: &Path,
    mode: Option<ModeArg>,
    epsilon: Option<f64>,
    write: bool,
) -> CliResult<i32> {
    let settings: IngestSettings = load_config(config)?;
    let mode = mode.map_or(settings.normalization, NormalizationMode::from);
    let epsilon = epsilon.unwrap_or(settings.normalization_epsilon);
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return usage("--epsilon", epsilon);
    }
    let ds = read_dataset(dataset)?;
    let stats = dataset_stats(&ds.episodes, mode, epsilon)?;
    if write {
        update_stats(dataset, &stats)?;
    }
    print_json(&serde_json::json!({ "state": stats.state, "action": stats.action }))?;
    Ok(EXIT_OK)
}

fn cmd_train(
    config: Option<&Path>,
    dataset: &Path,
    out: &Path,
    steps: Option<u64>,
    seed: Option<u64>,
    resume: Option<&Path>,
) -> CliResult<i32> {
    let mut settings: TrainSettings = load_config(config)?;
    if let Some(s) = seed {
        settings.policy.seed = s;
    }
    let steps = steps.unwrap_or(settings.steps);
    let ds = read_dataset(dataset)?;
    let eps: Vec<_> = ds.episodes.iter().collect();
    settings.policy.feature_dim = ds.manifest.feature_dim;
    let set = training_set(&eps, settings.policy.chunk_length, settings.adapter, settings.normalization_epsilon)?;
    let mut model = match resume {
        Some(p) => Checkpoint::load(p)?.into_model()?,
        None => PolicyModel::new(settings.policy.clone(), set.state_stats.clone(), set.action_stats.clone())?,
    };
    let sizes: BTreeMap<String, usize> = set.pairs.iter().map(|(k, v)| (k.clone(), v.len())).collect();
    let weights = sizes
        .keys()
        .map(|k| (k.clone(), if k == HUMAN_TAG { settings.human_weight } else { 1.0 }))
        .collect();
    let mut sampler = MixedSampler::new(&sizes, &weights, model.config.seed)?;
    let report = train(&mut model, &set.pairs, &mut sampler, steps, settings.report_every)?;
    Checkpoint::from_model(&model).save(out)?;
    print_json(&report)?;
    Ok(EXIT_OK)
}

fn cmd_predict(checkpoint: &Path, state: &[f64], feature: &[f64], tag: Option<String>) -> CliResult<i32> {
    let model = Checkpoint::load(checkpoint)?.into_model()?;
    if state.len() != STATE_DIM {
        return usage("--state", format!("expected {STATE_DIM} values, got {}", state.len()));
    }
    if feature.len() != model.config.feature_dim {
        return usage(
            "--feature",
            format!("expected {} values, got {}", model.config.feature_dim, feature.len()),
        );
    }
    let tag = tag.unwrap_or_else(|| model.state_stats.entries.keys().next().cloned().unwrap_or_default());
    let chunk = model.predict(state, feature, &tag)?;
    let actions: Vec<Vec<f64>> = chunk.actions.iter().map(|a| a.to_vector().to_vec()).collect();
    print_json(&serde_json::json!({ "tag": tag, "actions": actions }))?;
    Ok(EXIT_OK)
}

fn cmd_retarget(config: &Path, action: &[f64], q_prev: &[f64], w: Option<f64>) -> CliResult<i32> {
    let config = load_embodiment(config)?;
    let Ok(a) = UnifiedState::from_vector(action) else {
        return usage("--action", format!("expected a valid {STATE_DIM}-d unified state"));
    };
    let prev = if q_prev.is_empty() {
        RobotCommand::zeros(&config)
    } else {
        match RobotCommand::from_flat(q_prev, config.arm_dof()) {
            Ok(c) => c,
            Err(e) => return usage("--q-prev", e),
        }
    };
    let params = IkParams {
        orientation_weight: w.unwrap_or(IkParams::default().orientation_weight),
        ..IkParams::default()
    };
    if params.validate().is_err() {
        return usage("--orientation-weight", params.orientation_weight);
    }
    let (cmd, diag) = retarget_action(&a, &config, &prev, &params)?;
    print_json(&serde_json::json!({ "command": cmd, "diagnostics": diag }))?;
    Ok(EXIT_OK)
}

fn pose_json(p: &Pose) -> serde_json::Value {
    serde_json::json!({
        "pose": PoseFile::from_pose(p),
        "rot6d": p.rotation.to_rot6d().0,
    })
}

fn cmd_fk(config: &Path, q: &[f64], side: SideArg) -> CliResult<i32> {
    let config = load_embodiment(config)?;
    let chain = match side {
        SideArg::Left => config.arm(Side::Left),
        SideArg::Right => config.arm(Side::Right),
        SideArg::Neck => &config.neck,
    };
    if q.len() != chain.dof() {
        return usage("--q", format!("expected {} values, got {}", chain.dof(), q.len()));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return usage("--q", "non-finite value");
    }
    let pose = chain.forward_kinematics(q)?;
    print_json(&pose_json(&pose))?;
    Ok(EXIT_OK)
}

fn cmd_ik(
    config: &Path,
    target: &[f64],
    side: SideArg,
    q0: &[f64],
    w: Option<f64>,
    max_iters: Option<usize>,
) -> CliResult<i32> {
    let config = load_embodiment(config)?;
    let side = match side {
        SideArg::Left => Side::Left,
        SideArg::Right => Side::Right,
        SideArg::Neck => return usage("--side", "neck has no IK"),
    };
    let chain = config.arm(side);
    let q0 = if q0.is_empty() { vec![0.0; chain.dof()] } else { q0.to_vec() };
    if q0.len() != chain.dof() {
        return usage("--q0", format!("expected {} values, got {}", chain.dof(), q0.len()));
    }
    let (target, default_w) = match target {
        [x, y, z] => (Pose::from_translation(Vec3::new(*x, *y, *z)), 0.0),
        [x, y, z, rx, ry, rz] => (
            Pose::new(RotationMatrix::exp(&Vec3::new(*rx, *ry, *rz)), Vec3::new(*x, *y, *z)),
            IkParams::default().orientation_weight,
        ),
        _ => return usage("--target", format!("expected 3 or 6 values, got {}", target.len())),
    };
    let defaults = IkParams::default();
    let params = IkParams {
        orientation_weight: w.unwrap_or(default_w),
        max_iters: max_iters.unwrap_or(defaults.max_iters),
        ..defaults
    };
    if params.validate().is_err() {
        return usage("--orientation-weight/--max-iters", format!("{params:?}"));
    }
    let sol = ik_solve(chain, &target, &q0, &params)?;
    let reached = chain.forward_kinematics(&sol.q)?;
    print_json(&serde_json::json!({ "solution": sol, "reached": pose_json(&reached) }))?;
    Ok(EXIT_OK)
}

fn cmd_rollout(
    config: Option<&Path>,
    checkpoint: Option<&Path>,
    oracle: bool,
    goal: &[f64],
    seed: Option<u64>,
) -> CliResult<i32> {
    let common: CommonSettings = load_config(config)?;
    let embodiment = EmbodimentConfig::builtin(&common.embodiment)
        .ok_or_else(|| CliError::Usage(format!("--config: unknown embodiment {:?}", common.embodiment)))?;
    let [x, y, z] = goal else {
        return usage("--goal", format!("expected 3 values, got {}", goal.len()));
    };
    let goal = Vec3::new(*x, *y, *z);
    let settings = RolloutSettings {
        tag: embodiment.name.clone(),
        feature_seed: seed.unwrap_or(common.rollout.feature_seed),
        ..common.rollout.clone()
    };
    let result = match (checkpoint, oracle) {
        (Some(p), false) => {
            let model = Checkpoint::load(p)?.into_model()?;
            let policy = ModelPolicy {
                model: &model,
                tag: embodiment.name.clone(),
            };
            rollout(&policy, &embodiment, &common.task, &goal, &settings)?
        }
        (None, true) => {
            let reference = common.task.robot_reference(&embodiment, &goal)?;
            let policy = ReplayPolicy {
                states: reference.states,
                k: common.policy.chunk_length,
            };
            rollout(&policy, &embodiment, &common.task, &goal, &settings)?
        }
        _ => return Err(CliError::Usage("exactly one of --checkpoint or --oracle is required".into())),
    };
    print_json(&result)?;
    Ok(if result.success { EXIT_OK } else { EXIT_INVALID })
}

fn cmd_experiment(config: Option<&Path>, kind: ExperimentKind, out: &Path, seeds: &[u64]) -> CliResult<i32> {
    std::fs::create_dir_all(out)?;
    let write = |name: &str, body: String| std::fs::write(out.join(name), body);
    match kind {
        ExperimentKind::Cotraining => {
            let mut s: CotrainingSettings = load_config(config)?;
            if !seeds.is_empty() {
                s.seeds = seeds.to_vec();
            }
            let report = cotraining_experiment(&s)?;
            write("report.json", to_json(&report) + "\n")?;
            write("rows.csv", rows_to_csv(&report.rows))?;
            print_json(&report.summary)?;
        }
        ExperimentKind::Ablation => {
            let mut s: AblationSettings = load_config(config)?;
            if !seeds.is_empty() {
                s.seeds = seeds.to_vec();
            }
            let report = ablation_suite(&s)?;
            write("report.json", to_json(&report) + "\n")?;
            write("rows.csv", ablation_rows_to_csv(&report.rows))?;
            print_json(&report.summary)?;
        }
        ExperimentKind::Reach => {
            let mut s: ReachSettings = load_config(config)?;
            if !seeds.is_empty() {
                s.eval_seeds = seeds.to_vec();
            }
            let (model, report) = reach_benchmark(&s)?;
            Checkpoint::from_model(&model).save(&out.join("policy.ckpt"))?;
            write("report.json", to_json(&report) + "\n")?;
            print_json(&serde_json::json!({ "goals": report.goals, "successes": report.successes }))?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_validate(dataset: &Path) -> CliResult<i32> {
    if !dataset.is_dir() {
        return usage("--dataset", format!("{} is not a directory", dataset.display()));
    }
    let issues = match read_dataset(dataset) {
        Ok(ds) => validate_dataset(&ds),
        Err(e) => vec![e.to_string()],
    };
    print_json(&serde_json::json!({ "dataset": dataset.display().to_string(), "valid": issues.is_empty(), "issues": issues }))?;
    Ok(if issues.is_empty() { EXIT_OK } else { EXIT_INVALID })
}
