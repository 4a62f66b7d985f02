//! Raw capture logs: `<episode>/meta.json` plus `<episode>/frames.jsonl`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, EpisodeKind};
use crate::kinematics::{PoseFile, RobotCommand};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMeta {
    pub episode_id: String,
    pub embodiment_tag: String,
    pub kind: EpisodeKind,
    pub device: String,
    #[serde(default)]
    pub scene: String,
    #[serde(default)]
    pub instruction: String,
}

/// One line of `frames.jsonl`. A line carries a proprio record (all human
/// pose fields, or `joints`), a visual record (`feature_vector` or
/// `image_ref`), or both.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecord {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_pose: Option<PoseFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_wrist_pose: Option<PoseFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_wrist_pose: Option<PoseFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingertips: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joints: Option<RobotCommand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl RawRecord {
    fn pose_fields(&self) -> usize {
        usize::from(self.head_pose.is_some())
            + usize::from(self.left_wrist_pose.is_some())
            + usize::from(self.right_wrist_pose.is_some())
            + usize::from(self.fingertips.is_some())
    }

    pub fn is_human_proprio(&self) -> bool {
        self.pose_fields() == 4
    }

    pub fn is_robot_proprio(&self) -> bool {
        self.joints.is_some()
    }

    pub fn is_visual(&self) -> bool {
        self.feature_vector.is_some() || self.image_ref.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawCapture {
    pub meta: RawMeta,
    pub records: Vec<RawRecord>,
}

impl RawCapture {
    /// Parses `frames.jsonl` text; blank lines are skipped, line numbers are
    /// 1-based.
    pub fn parse(meta: RawMeta, frames_jsonl: &str) -> Result<Self, DatasetError> {
        let mut records = Vec::new();
        let mut kind = None;
        for (i, line) in frames_jsonl.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| DatasetError::Parse { line: i + 1, message };
            let rec: RawRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
            if !rec.t.is_finite() {
                return Err(parse_err("non-finite timestamp".into()));
            }
            let pose_fields = rec.pose_fields();
            if pose_fields != 0 && pose_fields != 4 {
                return Err(parse_err(
                    "human records need head_pose, left_wrist_pose, right_wrist_pose and fingertips"
                        .into(),
                ));
            }
            if let Some(tips) = &rec.fingertips {
                if tips.len() != 10 {
                    return Err(parse_err(format!("expected 10 fingertips, got {}", tips.len())));
                }
            }
            if rec.feature_vector.is_some() && rec.image_ref.is_some() {
                return Err(parse_err("feature_vector and image_ref are exclusive".into()));
            }
            let this = match (rec.is_human_proprio(), rec.is_robot_proprio()) {
                (true, true) => return Err(DatasetError::MixedForms),
                (true, false) => Some(EpisodeKind::Human),
                (false, true) => Some(EpisodeKind::Robot),
                (false, false) => None,
            };
            if let Some(k) = this {
                match kind {
                    None => kind = Some(k),
                    Some(prev) if prev != k => return Err(DatasetError::MixedForms),
                    _ => {}
                }
            }
            if !rec.is_visual() && this.is_none() {
                return Err(parse_err("record carries neither proprio nor visual data".into()));
            }
            records.push(rec);
        }
        if let Some(found) = kind {
            if found != meta.kind {
                return Err(DatasetError::KindMismatch {
                    declared: meta.kind,
                    found,
                });
            }
        }
        Ok(Self { meta, records })
    }

    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let meta_path = dir.join("meta.json");
        let frames_path = dir.join("frames.jsonl");
        let meta_text =
            std::fs::read_to_string(&meta_path).map_err(|e| DatasetError::io(&meta_path, e))?;
        let meta: RawMeta = serde_json::from_str(&meta_text)?;
        let frames =
            std::fs::read_to_string(&frames_path).map_err(|e| DatasetError::io(&frames_path, e))?;
        Self::parse(meta, &frames)
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serialize"));
            s.push('\n');
        }
        s
    }

    /// Writes `meta.json` and `frames.jsonl` into `dir`, creating it.
    pub fn save(&self, dir: &Path) -> Result<(), DatasetError> {
        std::fs::create_dir_all(dir).map_err(|e| DatasetError::io(dir, e))?;
        let meta_path = dir.join("meta.json");
        let meta = serde_json::to_string_pretty(&self.meta)?;
        std::fs::write(&meta_path, meta + "\n").map_err(|e| DatasetError::io(&meta_path, e))?;
        let frames_path = dir.join("frames.jsonl");
        std::fs::write(&frames_path, self.to_jsonl()).map_err(|e| DatasetError::io(&frames_path, e))
    }
}
