//! The 54-dimensional human-centric state/action codec and normalization
//! statistics.
//!
//! Layout (indices inclusive-exclusive):
//!
//! | range   | content                                         |
//! |---------|-------------------------------------------------|
//! | 0..6    | head rotation, 6D                               |
//! | 6..12   | left wrist rotation, 6D                         |
//! | 12..18  | right wrist rotation, 6D                        |
//! | 18..21  | left wrist position, m                          |
//! | 21..24  | right wrist position, m                         |
//! | 24..54  | fingertips: left thumb..pinky, right thumb..pinky |

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Pose, Rotation6D, RotationMatrix, Vec3};

pub const STATE_DIM: usize = 54;
pub const HEAD_ROT: Range<usize> = 0..6;
pub const LEFT_WRIST_ROT: Range<usize> = 6..12;
pub const RIGHT_WRIST_ROT: Range<usize> = 12..18;
pub const LEFT_WRIST_POS: Range<usize> = 18..21;
pub const RIGHT_WRIST_POS: Range<usize> = 21..24;
pub const FINGERTIPS: Range<usize> = 24..54;
pub const FINGERS_PER_HAND: usize = 5;

/// Default anatomical bound on wrist-to-fingertip distance, meters.
pub const DEFAULT_FINGERTIP_BOUND: f64 = 0.35;

/// Key used for the single entry of shared-mode statistics.
pub const SHARED_KEY: &str = "shared";

pub type StateVector = [f64; STATE_DIM];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnifiedError {
    #[error("invalid component {component}: {reason}")]
    InvalidComponent {
        component: &'static str,
        reason: String,
    },
    #[error("expected a {expected}-vector, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("embodiment {0:?} has fewer than 2 frames")]
    InsufficientFrames(String),
    #[error("unknown embodiment tag {0:?}")]
    UnknownEmbodimentTag(String),
}

/// Wrist sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Human-centric proprioceptive state. Actions use the same layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnifiedState {
    pub head_rot: Rotation6D,
    pub left_wrist_rot: Rotation6D,
    pub right_wrist_rot: Rotation6D,
    pub left_wrist_pos: Vec3,
    pub right_wrist_pos: Vec3,
    /// Left thumb..pinky, then right thumb..pinky.
    pub fingertips: [Vec3; 10],
}

pub type ActionVector = UnifiedState;

impl UnifiedState {
    /// Builds a state from decoded poses; rotations are encoded column-major.
    pub fn from_poses(
        head: &RotationMatrix,
        left_wrist: &Pose,
        right_wrist: &Pose,
        fingertips: [Vec3; 10],
    ) -> Self {
        Self {
            head_rot: head.to_rot6d(),
            left_wrist_rot: left_wrist.rotation.to_rot6d(),
            right_wrist_rot: right_wrist.rotation.to_rot6d(),
            left_wrist_pos: left_wrist.translation,
            right_wrist_pos: right_wrist.translation,
            fingertips,
        }
    }

    /// Flattens into the fixed layout. Exact: no arithmetic is performed.
    pub fn to_vector(&self) -> StateVector {
        let mut v = [0.0; STATE_DIM];
        v[HEAD_ROT].copy_from_slice(&self.head_rot.0);
        v[LEFT_WRIST_ROT].copy_from_slice(&self.left_wrist_rot.0);
        v[RIGHT_WRIST_ROT].copy_from_slice(&self.right_wrist_rot.0);
        v[LEFT_WRIST_POS].copy_from_slice(self.left_wrist_pos.as_slice());
        v[RIGHT_WRIST_POS].copy_from_slice(self.right_wrist_pos.as_slice());
        for (i, tip) in self.fingertips.iter().enumerate() {
            let o = FINGERTIPS.start + 3 * i;
            v[o..o + 3].copy_from_slice(tip.as_slice());
        }
        v
    }

    /// Inverse of [`UnifiedState::to_vector`]. Rejects non-finite entries
    /// and rotation blocks that do not decode.
    pub fn from_vector(v: &[f64]) -> Result<Self, UnifiedError> {
        let s = Self::from_vector_unchecked(v)?;
        s.check_components()?;
        Ok(s)
    }

    pub(crate) fn from_vector_unchecked(v: &[f64]) -> Result<Self, UnifiedError> {
        if v.len() != STATE_DIM {
            return Err(UnifiedError::DimensionMismatch {
                expected: STATE_DIM,
                got: v.len(),
            });
        }
        let p = |r: Range<usize>| Vec3::new(v[r.start], v[r.start + 1], v[r.start + 2]);
        let mut fingertips = [Vec3::zeros(); 10];
        for (i, tip) in fingertips.iter_mut().enumerate() {
            let o = FINGERTIPS.start + 3 * i;
            *tip = p(o..o + 3);
        }
        Ok(Self {
            head_rot: Rotation6D::from_slice(&v[HEAD_ROT]),
            left_wrist_rot: Rotation6D::from_slice(&v[LEFT_WRIST_ROT]),
            right_wrist_rot: Rotation6D::from_slice(&v[RIGHT_WRIST_ROT]),
            left_wrist_pos: p(LEFT_WRIST_POS),
            right_wrist_pos: p(RIGHT_WRIST_POS),
            fingertips,
        })
    }

    fn check_components(&self) -> Result<(), UnifiedError> {
        let rot = |name: &'static str, r: &Rotation6D| {
            r.decode().map(|_| ()).map_err(|e: GeometryError| {
                UnifiedError::InvalidComponent {
                    component: name,
                    reason: e.to_string(),
                }
            })
        };
        rot("head_rot", &self.head_rot)?;
        rot("left_wrist_rot", &self.left_wrist_rot)?;
        rot("right_wrist_rot", &self.right_wrist_rot)?;
        let finite = |name: &'static str, p: &Vec3| {
            if p.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(UnifiedError::InvalidComponent {
                    component: name,
                    reason: "non-finite position".into(),
                })
            }
        };
        finite("left_wrist_pos", &self.left_wrist_pos)?;
        finite("right_wrist_pos", &self.right_wrist_pos)?;
        for tip in &self.fingertips {
            finite("fingertips", tip)?;
        }
        Ok(())
    }

    /// Full validity check including the wrist-to-fingertip bound.
    pub fn validate(&self, fingertip_bound: f64) -> Result<(), UnifiedError> {
        self.check_components()?;
        for side in [Side::Left, Side::Right] {
            let wrist = self.wrist_pos(side);
            for tip in self.hand_fingertips(side) {
                let d = (tip - wrist).norm();
                if d > fingertip_bound {
                    return Err(UnifiedError::InvalidComponent {
                        component: "fingertips",
                        reason: format!(
                            "{side:?} fingertip {d:.3} m from wrist exceeds {fingertip_bound} m"
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn wrist_pos(&self, side: Side) -> Vec3 {
        match side {
            Side::Left => self.left_wrist_pos,
            Side::Right => self.right_wrist_pos,
        }
    }

    pub fn wrist_rot(&self, side: Side) -> Rotation6D {
        match side {
            Side::Left => self.left_wrist_rot,
            Side::Right => self.right_wrist_rot,
        }
    }

    pub fn wrist_pose(&self, side: Side) -> Result<Pose, GeometryError> {
        Ok(Pose::new(self.wrist_rot(side).decode()?, self.wrist_pos(side)))
    }

    pub fn hand_fingertips(&self, side: Side) -> [Vec3; FINGERS_PER_HAND] {
        let o = match side {
            Side::Left => 0,
            Side::Right => FINGERS_PER_HAND,
        };
        let mut out = [Vec3::zeros(); FINGERS_PER_HAND];
        out.copy_from_slice(&self.fingertips[o..o + FINGERS_PER_HAND]);
        out
    }

    /// Re-orthogonalizes every rotation block through decode/encode.
    pub fn orthogonalized(&self) -> Result<Self, GeometryError> {
        Ok(Self {
            head_rot: self.head_rot.decode()?.to_rot6d(),
            left_wrist_rot: self.left_wrist_rot.decode()?.to_rot6d(),
            right_wrist_rot: self.right_wrist_rot.decode()?.to_rot6d(),
            ..*self
        })
    }
}

/// Indices of the left and right wrist translations: the end-effector
/// block emphasized by the training loss.
pub fn eef_indices() -> [usize; 6] {
    [18, 19, 20, 21, 22, 23]
}

/// Fixed-length sequence of future actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk {
    pub actions: Vec<ActionVector>,
}

impl ActionChunk {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Row-major `K x 54` flattening.
    pub fn to_flat(&self) -> Vec<f64> {
        self.actions.iter().flat_map(|a| a.to_vector()).collect()
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self, UnifiedError> {
        if flat.len() % STATE_DIM != 0 {
            return Err(UnifiedError::DimensionMismatch {
                expected: STATE_DIM * (flat.len() / STATE_DIM + 1),
                got: flat.len(),
            });
        }
        let actions = flat
            .chunks_exact(STATE_DIM)
            .map(UnifiedState::from_vector)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { actions })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    Shared,
    PerEmbodiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Per-dimension mean/std, either one shared entry or one per embodiment tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mode: NormalizationMode,
    pub epsilon: f64,
    pub entries: BTreeMap<String, DimStats>,
}

pub const DEFAULT_EPSILON: f64 = 1e-6;

impl NormalizationStats {
    /// Stats that leave vectors unchanged (mean 0, std 1).
    pub fn identity(dim: usize) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(
            SHARED_KEY.to_string(),
            DimStats {
                mean: vec![0.0; dim],
                std: vec![1.0; dim],
            },
        );
        Self {
            mode: NormalizationMode::Shared,
            epsilon: DEFAULT_EPSILON,
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.values().next().map_or(0, |e| e.mean.len())
    }

    pub fn entry(&self, tag: &str) -> Result<&DimStats, UnifiedError> {
        let key = match self.mode {
            NormalizationMode::Shared => SHARED_KEY,
            NormalizationMode::PerEmbodiment => tag,
        };
        self.entries
            .get(key)
            .ok_or_else(|| UnifiedError::UnknownEmbodimentTag(tag.to_string()))
    }

    pub fn normalize(&self, x: &[f64], tag: &str) -> Result<Vec<f64>, UnifiedError> {
        let e = self.entry(tag)?;
        check_dim(x, e.mean.len())?;
        Ok(x.iter()
            .zip(e.mean.iter().zip(&e.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn denormalize(&self, y: &[f64], tag: &str) -> Result<Vec<f64>, UnifiedError> {
        let e = self.entry(tag)?;
        check_dim(y, e.mean.len())?;
        Ok(y.iter()
            .zip(e.mean.iter().zip(&e.std))
            .map(|(v, (m, s))| v * s + m)
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

fn check_dim(x: &[f64], dim: usize) -> Result<(), UnifiedError> {
    if x.len() == dim {
        Ok(())
    } else {
        Err(UnifiedError::DimensionMismatch {
            expected: dim,
            got: x.len(),
        })
    }
}

/// Correctly rounded sum of `values` (Shewchuk's exact partials).
///
/// The result does not depend on iteration order, which makes statistics
/// reproducible regardless of how frames were gathered.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // Round the expansion to nearest, as in Python's math.fsum.
    let Some(mut hi) = partials.pop() else {
        return 0.0;
    };
    let mut lo = 0.0;
    while let Some(p) = partials.pop() {
        let x = hi;
        let y = p;
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if let Some(&next) = partials.last() {
        if (lo < 0.0 && next < 0.0) || (lo > 0.0 && next > 0.0) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
    }
    hi
}

fn dim_stats(rows: &[&[f64]], epsilon: f64) -> DimStats {
    let dim = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    let mut std = vec![0.0; dim];
    for d in 0..dim {
        let m = exact_sum(rows.iter().map(|r| r[d])) / n;
        let var = exact_sum(rows.iter().map(|r| {
            let c = r[d] - m;
            c * c
        })) / n;
        mean[d] = m;
        std[d] = var.sqrt().max(epsilon);
    }
    DimStats { mean, std }
}

/// Population mean/std over tagged vectors, grouped by `mode`.
pub fn compute_stats<'a, I>(
    samples: I,
    mode: NormalizationMode,
    epsilon: f64,
) -> Result<NormalizationStats, UnifiedError>
where
    I: IntoIterator<Item = (&'a str, &'a [f64])>,
{
    let mut groups: BTreeMap<String, Vec<&'a [f64]>> = BTreeMap::new();
    let mut dim = None;
    for (tag, v) in samples {
        match dim {
            None => dim = Some(v.len()),
            Some(d) => check_dim(v, d)?,
        }
        let key = match mode {
            NormalizationMode::Shared => SHARED_KEY,
            NormalizationMode::PerEmbodiment => tag,
        };
        groups.entry(key.to_string()).or_default().push(v);
    }
    if groups.is_empty() {
        return Err(UnifiedError::EmptyDataset);
    }
    if mode == NormalizationMode::PerEmbodiment {
        if let Some((tag, _)) = groups.iter().find(|(_, rows)| rows.len() < 2) {
            return Err(UnifiedError::InsufficientFrames(tag.clone()));
        }
    }
    let entries = groups
        .into_iter()
        .map(|(k, rows)| (k, dim_stats(&rows, epsilon)))
        .collect();
    Ok(NormalizationStats {
        mode,
        epsilon,
        entries,
    })
}
