use super::features::{FeatureProvider, HashFeatures};
use super::raw::{RawCapture, RawRecord};
use super::{DatasetError, DemonstrationEpisode, EpisodeFrame, EpisodeKind, EpisodeMetadata};
use crate::geometry::{Pose, RotationMatrix, Vec3};
use crate::kinematics::{embed_robot_state, robot_head_position, EmbodimentConfig, RobotCommand};
use crate::par::{self, Execution};
use crate::retiming::{
    body_motion_check, retime, sync_streams, Frame, SlowdownFactor, Trajectory, DEFAULT_ALPHA,
    DEFAULT_MOTION_THRESHOLD,
};
use crate::unified::{UnifiedState, DEFAULT_FINGERTIP_BOUND};

/// Output rate of retimed human episodes, Hz.
pub const DEFAULT_OUT_RATE: f64 = 30.0;
/// Head height above the canonical origin when no config is given, meters.
const DEFAULT_HEAD_HEIGHT: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    pub alpha: f64,
    /// When false human episodes keep their captured timing.
    pub retime: bool,
    pub out_rate: f64,
    pub motion_threshold: f64,
    /// Maximum proprio/visual skew, seconds. Defaults to half the median
    /// visual frame period.
    pub max_skew: Option<f64>,
    /// Dimension of hashed features for `image_ref` records.
    pub image_feature_dim: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            retime: true,
            out_rate: DEFAULT_OUT_RATE,
            motion_threshold: DEFAULT_MOTION_THRESHOLD,
            max_skew: None,
            image_feature_dim: 16,
        }
    }
}

/// Maps world coordinates of a human capture into the canonical frame: yaw
/// aligned with the initial head heading, origin `head_height` below the
/// initial head position.
pub fn canonical_frame(initial_head: &Pose, head_height: f64) -> Pose {
    let (yaw, _, _) = initial_head.rotation.yaw_pitch_roll();
    let origin = initial_head.translation - Vec3::new(0.0, 0.0, head_height);
    Pose::new(RotationMatrix::rot_z(yaw), origin).inverse()
}

struct Visual {
    t: f64,
    feature: Vec<f64>,
}

fn visual_stream(
    records: &[RawRecord],
    provider: &dyn FeatureProvider,
) -> Result<Vec<Visual>, DatasetError> {
    let mut out: Vec<Visual> = Vec::new();
    for r in records.iter().filter(|r| r.is_visual()) {
        let feature = match (&r.feature_vector, &r.image_ref) {
            (Some(v), _) => v.clone(),
            (None, Some(s)) => provider.features(s),
            (None, None) => unreachable!("filtered to visual records"),
        };
        if let Some(first) = out.first() {
            if feature.len() != first.feature.len() {
                return Err(DatasetError::FeatureDim {
                    expected: first.feature.len(),
                    got: feature.len(),
                });
            }
        }
        out.push(Visual { t: r.t, feature });
    }
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(out)
}

fn default_skew(visual: &[Visual]) -> f64 {
    let mut gaps: Vec<f64> = visual
        .windows(2)
        .map(|w| w[1].t - w[0].t)
        .filter(|g| *g > 0.0)
        .collect();
    if gaps.is_empty() {
        return f64::INFINITY;
    }
    gaps.sort_by(f64::total_cmp);
    let m = gaps.len();
    let median = if m % 2 == 1 {
        gaps[m / 2]
    } else {
        0.5 * (gaps[m / 2 - 1] + gaps[m / 2])
    };
    0.5 * median
}

/// Pairs proprio records with visual frames; returns `(record, visual)` index
/// pairs in time order.
fn pair_streams<'a>(
    proprio: &[&'a RawRecord],
    visual: &[Visual],
    options: &IngestOptions,
) -> Result<Vec<(&'a RawRecord, usize)>, DatasetError> {
    if visual.is_empty() || proprio.is_empty() {
        return Err(DatasetError::FrameSyncExhausted {
            paired: 0,
            dropped: proprio.len(),
        });
    }
    let skew = options.max_skew.unwrap_or_else(|| default_skew(visual));
    let pt: Vec<f64> = proprio.iter().map(|r| r.t).collect();
    let vt: Vec<f64> = visual.iter().map(|v| v.t).collect();
    let sync = sync_streams(&pt, &vt, skew)?;
    if sync.pairs.len() < 2 {
        return Err(DatasetError::FrameSyncExhausted {
            paired: sync.pairs.len(),
            dropped: sync.dropped,
        });
    }
    Ok(sync.pairs.iter().map(|&(i, v, _)| (proprio[i], v)).collect())
}

fn human_state(r: &RawRecord, canon: &Pose) -> Result<(UnifiedState, Vec3), DatasetError> {
    let pose = |p: &Option<crate::kinematics::PoseFile>| -> Result<Pose, DatasetError> {
        let p = p.as_ref().expect("human record").to_pose()?;
        Ok(canon.compose(&p))
    };
    let head = pose(&r.head_pose)?;
    let left = pose(&r.left_wrist_pose)?;
    let right = pose(&r.right_wrist_pose)?;
    let raw_tips = r.fingertips.as_ref().expect("human record");
    let mut tips = [Vec3::zeros(); 10];
    for (tip, raw) in tips.iter_mut().zip(raw_tips) {
        *tip = canon.transform_point(&Vec3::from(*raw));
    }
    let state = UnifiedState::from_poses(&head.rotation, &left, &right, tips);
    state.validate(DEFAULT_FINGERTIP_BOUND)?;
    Ok((state, head.translation))
}

/// Converts a raw capture into an episode.
///
/// Human captures are re-expressed in the canonical frame, paired with
/// visual frames by nearest timestamp, checked for body motion and retimed.
/// Robot logs are embedded through forward kinematics of `config` at their
/// native timing.
pub fn ingest(
    raw: &RawCapture,
    config: Option<&EmbodimentConfig>,
    options: &IngestOptions,
) -> Result<DemonstrationEpisode, DatasetError> {
    let provider = HashFeatures {
        dim: options.image_feature_dim,
    };
    ingest_with(raw, config, options, &provider)
}

pub fn ingest_with(
    raw: &RawCapture,
    config: Option<&EmbodimentConfig>,
    options: &IngestOptions,
    provider: &dyn FeatureProvider,
) -> Result<DemonstrationEpisode, DatasetError> {
    let visual = visual_stream(&raw.records, provider)?;
    let mut proprio: Vec<&RawRecord> = raw
        .records
        .iter()
        .filter(|r| r.is_human_proprio() || r.is_robot_proprio())
        .collect();
    proprio.sort_by(|a, b| a.t.total_cmp(&b.t));
    let paired = pair_streams(&proprio, &visual, options)?;
    let meta = &raw.meta;
    let tag = meta.embodiment_tag.clone();

    let (frames, retimed, alpha_applied) = match meta.kind {
        EpisodeKind::Human => {
            let head_height = config.map_or(DEFAULT_HEAD_HEIGHT, |c| c.canonical_frame_offset);
            let first_head = paired[0].0.head_pose.as_ref().expect("human record").to_pose()?;
            let canon = canonical_frame(&first_head, head_height);
            let mut traj_frames = Vec::with_capacity(paired.len());
            for (r, _) in &paired {
                let (state, head_position) = human_state(r, &canon)?;
                traj_frames.push(Frame {
                    t: r.t,
                    state,
                    head_position,
                });
            }
            let traj = Trajectory::new(traj_frames, tag.clone(), options.out_rate)?;
            let report = body_motion_check(&traj, options.motion_threshold);
            if !report.pass {
                return Err(DatasetError::BodyMotionRejected {
                    excursion: report.excursion_m,
                    threshold: options.motion_threshold,
                });
            }
            let feature_of = |k: usize| visual[paired[k].1].feature.clone();
            if options.retime {
                let alpha = SlowdownFactor::new(options.alpha)?;
                let out = retime(&traj, alpha, options.out_rate)?;
                // Each retimed frame takes the feature of the input frame
                // nearest to the source instant it was sampled from.
                let input_t: Vec<f64> = traj.frames().iter().map(|f| f.t).collect();
                let (t0, d) = (input_t[0], traj.duration());
                let n = out.len();
                let source_t: Vec<f64> = (0..n)
                    .map(|j| t0 + d * j as f64 / (n - 1) as f64)
                    .collect();
                let nearest = sync_streams(&source_t, &input_t, f64::INFINITY)?;
                let frames = out
                    .frames()
                    .iter()
                    .zip(&nearest.pairs)
                    .map(|(f, &(_, k, _))| EpisodeFrame {
                        t: f.t,
                        state: f.state,
                        feature: feature_of(k),
                        joints: Vec::new(),
                    })
                    .collect();
                (frames, true, alpha.value())
            } else {
                let frames = traj
                    .frames()
                    .iter()
                    .enumerate()
                    .map(|(k, f)| EpisodeFrame {
                        t: f.t,
                        state: f.state,
                        feature: feature_of(k),
                        joints: Vec::new(),
                    })
                    .collect();
                (frames, false, 1.0)
            }
        }
        EpisodeKind::Robot => {
            let config = config.ok_or(DatasetError::MissingConfig)?;
            let mut traj_frames = Vec::with_capacity(paired.len());
            let mut frames = Vec::with_capacity(paired.len());
            for (r, v) in &paired {
                let cmd: &RobotCommand = r.joints.as_ref().expect("robot record");
                let state = embed_robot_state(cmd, config)?;
                traj_frames.push(Frame {
                    t: r.t,
                    state,
                    head_position: robot_head_position(config, &cmd.neck)?,
                });
                frames.push(EpisodeFrame {
                    t: r.t,
                    state,
                    feature: visual[*v].feature.clone(),
                    joints: cmd.to_flat(),
                });
            }
            // Rejects duplicate or unordered timestamps.
            Trajectory::new(traj_frames, tag.clone(), options.out_rate)?;
            (frames, false, 1.0)
        }
    };
    let duration_s = frames[frames.len() - 1].t - frames[0].t;
    Ok(DemonstrationEpisode {
        id: meta.episode_id.clone(),
        embodiment_tag: tag,
        kind: meta.kind,
        instruction: meta.instruction.clone(),
        frames,
        metadata: EpisodeMetadata {
            device: meta.device.clone(),
            scene: meta.scene.clone(),
            duration_s,
            retimed,
            alpha_applied,
        },
    })
}

/// Ingests independent captures, in parallel when `exec` allows. Results
/// keep input order.
pub fn ingest_all<'c, F>(
    raws: &[RawCapture],
    config_for: F,
    options: &IngestOptions,
    exec: Execution,
) -> Vec<Result<DemonstrationEpisode, DatasetError>>
where
    F: Fn(&str) -> Option<&'c EmbodimentConfig> + Sync + Send,
{
    par::map_with(exec, raws, |raw| {
        ingest(raw, config_for(&raw.meta.embodiment_tag), options)
    })
}
