//! Retiming of fast human demonstrations to robot speed, nearest-timestamp
//! stream synchronization and the upright-posture check.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{slerp, GeometryError, Rotation6D, Vec3};
use crate::unified::UnifiedState;

/// Slow-down factor applied to human demonstrations.
pub const DEFAULT_ALPHA: f64 = 4.0;
/// Maximum head excursion tolerated by [`body_motion_check`], meters.
pub const DEFAULT_MOTION_THRESHOLD: f64 = 0.15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetimingError {
    #[error("trajectory needs at least 2 frames, got {0}")]
    DegenerateTrajectory(usize),
    #[error("timestamps must be strictly increasing (frame {0})")]
    NonMonotonic(usize),
    #[error("slow-down factor must be finite and > 1, got {0}")]
    InvalidAlpha(f64),
    #[error("output rate must be finite and > 0, got {0}")]
    InvalidRate(f64),
    #[error("empty {0} stream")]
    EmptyStream(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub state: UnifiedState,
    /// Head position in the canonical frame; drives the posture check.
    pub head_position: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    frames: Vec<Frame>,
    pub embodiment_tag: String,
    pub nominal_rate: f64,
}

impl Trajectory {
    pub fn new(
        frames: Vec<Frame>,
        embodiment_tag: impl Into<String>,
        nominal_rate: f64,
    ) -> Result<Self, RetimingError> {
        if frames.len() < 2 {
            return Err(RetimingError::DegenerateTrajectory(frames.len()));
        }
        if let Some(i) = frames.windows(2).position(|w| !(w[1].t > w[0].t)) {
            return Err(RetimingError::NonMonotonic(i + 1));
        }
        Ok(Self {
            frames,
            embodiment_tag: embodiment_tag.into(),
            nominal_rate,
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn duration(&self) -> f64 {
        self.frames[self.frames.len() - 1].t - self.frames[0].t
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Temporal stretch factor, strictly greater than one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowdownFactor(f64);

impl SlowdownFactor {
    pub fn new(alpha: f64) -> Result<Self, RetimingError> {
        if alpha.is_finite() && alpha > 1.0 {
            Ok(Self(alpha))
        } else {
            Err(RetimingError::InvalidAlpha(alpha))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl Default for SlowdownFactor {
    fn default() -> Self {
        Self(DEFAULT_ALPHA)
    }
}

fn lerp3(a: &Vec3, b: &Vec3, u: f64) -> Vec3 {
    a + (b - a) * u
}

fn slerp6(a: &Rotation6D, b: &Rotation6D, u: f64) -> Result<Rotation6D, GeometryError> {
    if a == b {
        return Ok(*a);
    }
    let qa = a.decode()?.to_quaternion();
    let qb = b.decode()?.to_quaternion();
    Ok(slerp(&qa, &qb, u).to_rotation_matrix().to_rot6d())
}

/// Interpolates between two frames: positions linearly, rotations by slerp.
pub fn interpolate_state(
    a: &UnifiedState,
    b: &UnifiedState,
    u: f64,
) -> Result<UnifiedState, GeometryError> {
    let mut tips = [Vec3::zeros(); 10];
    for (i, tip) in tips.iter_mut().enumerate() {
        *tip = lerp3(&a.fingertips[i], &b.fingertips[i], u);
    }
    Ok(UnifiedState {
        head_rot: slerp6(&a.head_rot, &b.head_rot, u)?,
        left_wrist_rot: slerp6(&a.left_wrist_rot, &b.left_wrist_rot, u)?,
        right_wrist_rot: slerp6(&a.right_wrist_rot, &b.right_wrist_rot, u)?,
        left_wrist_pos: lerp3(&a.left_wrist_pos, &b.left_wrist_pos, u),
        right_wrist_pos: lerp3(&a.right_wrist_pos, &b.right_wrist_pos, u),
        fingertips: tips,
    })
}

/// Number of frames and sample map produced by [`retime`].
///
/// The output has `round(alpha * duration * out_rate) + 1` frames spaced
/// `1 / out_rate` apart. Output frame `j` samples the input at
/// `t0 + duration * j / (n - 1)`, so both endpoints land exactly on input
/// frames; the realized stretch differs from `alpha` by less than half an
/// output period over the whole trajectory.
pub fn retimed_frame_count(duration: f64, alpha: f64, out_rate: f64) -> usize {
    ((alpha * duration * out_rate).round() as usize).max(1) + 1
}

/// Stretches `traj` in time by `alpha` and resamples it uniformly at `out_rate`.
pub fn retime(
    traj: &Trajectory,
    alpha: SlowdownFactor,
    out_rate: f64,
) -> Result<Trajectory, RetimingError> {
    stretch(traj, alpha.value(), out_rate)
}

/// [`retime`] without the `alpha > 1` restriction; `alpha = 1` resamples only.
pub fn stretch(traj: &Trajectory, alpha: f64, out_rate: f64) -> Result<Trajectory, RetimingError> {
    if !(out_rate.is_finite() && out_rate > 0.0) {
        return Err(RetimingError::InvalidRate(out_rate));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(RetimingError::InvalidAlpha(alpha));
    }
    let input = traj.frames();
    if input.len() < 2 {
        return Err(RetimingError::DegenerateTrajectory(input.len()));
    }
    let t0 = input[0].t;
    let duration = traj.duration();
    let n = retimed_frame_count(duration, alpha, out_rate);
    let mut out = Vec::with_capacity(n);
    let mut k = 0usize;
    for j in 0..n {
        let t_out = t0 + j as f64 / out_rate;
        if j == 0 {
            out.push(Frame { t: t_out, ..input[0] });
            continue;
        }
        if j == n - 1 {
            out.push(Frame {
                t: t_out,
                ..input[input.len() - 1]
            });
            continue;
        }
        let s = t0 + duration * j as f64 / (n - 1) as f64;
        while k + 2 < input.len() && input[k + 1].t <= s {
            k += 1;
        }
        let (a, b) = (&input[k], &input[k + 1]);
        let u = ((s - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        let state = if u == 0.0 {
            a.state
        } else if u == 1.0 {
            b.state
        } else {
            interpolate_state(&a.state, &b.state, u)?
        };
        out.push(Frame {
            t: t_out,
            state,
            head_position: lerp3(&a.head_position, &b.head_position, u),
        });
    }
    Trajectory::new(out, traj.embodiment_tag.clone(), out_rate)
}

/// Result of pairing two timestamped streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncOutcome {
    /// `(proprio index, visual index, |dt|)`, sorted by proprio index.
    pub pairs: Vec<(usize, usize, f64)>,
    /// Proprio records whose nearest visual frame was beyond `max_skew`.
    pub dropped: usize,
}

/// Pairs each proprio timestamp with the nearest visual timestamp.
///
/// Both inputs must be sorted ascending. Ties go to the earlier visual frame.
pub fn sync_streams(
    proprio: &[f64],
    visual: &[f64],
    max_skew: f64,
) -> Result<SyncOutcome, RetimingError> {
    if proprio.is_empty() {
        return Err(RetimingError::EmptyStream("proprio"));
    }
    if visual.is_empty() {
        return Err(RetimingError::EmptyStream("visual"));
    }
    let mut pairs = Vec::with_capacity(proprio.len());
    let mut dropped = 0;
    let mut v = 0usize;
    for (i, &t) in proprio.iter().enumerate() {
        // Advance while the next distinct visual timestamp is strictly closer.
        // Distance is unimodal in the visual index, so `v` ends on the
        // earliest nearest frame and never needs to move backwards.
        loop {
            let mut w = v + 1;
            while w < visual.len() && visual[w] == visual[v] {
                w += 1;
            }
            if w < visual.len() && (visual[w] - t).abs() < (visual[v] - t).abs() {
                v = w;
            } else {
                break;
            }
        }
        let dt = (visual[v] - t).abs();
        if dt <= max_skew {
            pairs.push((i, v, dt));
        } else {
            dropped += 1;
        }
    }
    Ok(SyncOutcome { pairs, dropped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyMotionReport {
    pub excursion_m: f64,
    pub pass: bool,
}

/// Flags trajectories whose head wanders more than `threshold` meters from
/// its initial position.
pub fn body_motion_check(traj: &Trajectory, threshold: f64) -> BodyMotionReport {
    let frames = traj.frames();
    let origin = frames[0].head_position;
    let excursion_m = frames
        .iter()
        .map(|f| (f.head_position - origin).norm())
        .fold(0.0, f64::max);
    BodyMotionReport {
        excursion_m,
        pass: excursion_m <= threshold,
    }
}
