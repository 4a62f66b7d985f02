//! Robot embodiment descriptions and their JSON file format.
//!
//! Angles are degrees in files and radians in memory.

use serde::{Deserialize, Serialize};

use super::chain::{Joint, KinematicChain};
use super::hand::HandModel;
use super::KinematicsError;
use crate::geometry::{Pose, UnitQuaternion, Vec3};

const HUMANOID_A: &str = include_str!("../../configs/humanoid_a.json");
const HUMANOID_B: &str = include_str!("../../configs/humanoid_b.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFile {
    pub translation: [f64; 3],
    /// `(w, x, y, z)`.
    pub rotation_quaternion: [f64; 4],
}

impl Default for PoseFile {
    fn default() -> Self {
        Self {
            translation: [0.0; 3],
            rotation_quaternion: [1.0, 0.0, 0.0, 0.0],
        }
    }
}

impl PoseFile {
    pub fn to_pose(&self) -> Result<Pose, KinematicsError> {
        let q = UnitQuaternion::from_array(self.rotation_quaternion)
            .map_err(|e| KinematicsError::InvalidChain(e.to_string()))?;
        Ok(Pose::new(q.to_rotation_matrix(), Vec3::from(self.translation)))
    }

    pub fn from_pose(p: &Pose) -> Self {
        Self {
            translation: [p.translation.x, p.translation.y, p.translation.z],
            rotation_quaternion: p.rotation.to_quaternion().to_array(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointFile {
    pub name: String,
    pub axis: [f64; 3],
    #[serde(default)]
    pub origin: PoseFile,
    pub limits_deg: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainFile {
    #[serde(default)]
    pub base_frame: PoseFile,
    #[serde(default)]
    pub tip_offset: PoseFile,
    pub joints: Vec<JointFile>,
}

impl ChainFile {
    pub fn build(&self) -> Result<KinematicChain, KinematicsError> {
        let joints = self
            .joints
            .iter()
            .map(|j| {
                Joint::new(
                    j.name.clone(),
                    Vec3::from(j.axis),
                    j.origin.to_pose()?,
                    (j.limits_deg[0].to_radians(), j.limits_deg[1].to_radians()),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        KinematicChain::new(joints, self.base_frame.to_pose()?, self.tip_offset.to_pose()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbodimentFile {
    pub name: String,
    pub canonical_frame_offset: f64,
    pub left_arm: ChainFile,
    pub right_arm: ChainFile,
    pub neck: ChainFile,
    pub hand_model: HandModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbodimentConfig {
    pub name: String,
    pub left_arm: KinematicChain,
    pub right_arm: KinematicChain,
    /// Yaw then pitch.
    pub neck: KinematicChain,
    pub hand_model: HandModel,
    /// Head height above the canonical base frame origin, meters.
    pub canonical_frame_offset: f64,
    source: EmbodimentFile,
}

impl EmbodimentConfig {
    pub fn from_file_repr(file: EmbodimentFile) -> Result<Self, KinematicsError> {
        let left_arm = file.left_arm.build()?;
        let right_arm = file.right_arm.build()?;
        let neck = file.neck.build()?;
        for (side, arm) in [("left", &left_arm), ("right", &right_arm)] {
            if arm.dof() != 5 && arm.dof() != 7 {
                return Err(KinematicsError::InvalidChain(format!(
                    "{side} arm must have 5 or 7 joints, got {}",
                    arm.dof()
                )));
            }
        }
        if left_arm.dof() != right_arm.dof() {
            return Err(KinematicsError::InvalidChain("arms differ in joint count".into()));
        }
        if neck.dof() != 2 {
            return Err(KinematicsError::InvalidChain(format!(
                "neck must have 2 joints, got {}",
                neck.dof()
            )));
        }
        file.hand_model.validate().map_err(KinematicsError::InvalidChain)?;
        Ok(Self {
            name: file.name.clone(),
            left_arm,
            right_arm,
            neck,
            hand_model: file.hand_model.clone(),
            canonical_frame_offset: file.canonical_frame_offset,
            source: file,
        })
    }

    pub fn from_json(s: &str) -> Result<Self, KinematicsError> {
        let file: EmbodimentFile =
            serde_json::from_str(s).map_err(|e| KinematicsError::Config(e.to_string()))?;
        Self::from_file_repr(file)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, KinematicsError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| KinematicsError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.source).expect("config serialize")
    }

    /// Five-joint arms (single wrist roll) with the narrower range of motion.
    pub fn humanoid_a() -> Self {
        Self::from_json(HUMANOID_A).expect("bundled humanoid_a config")
    }

    /// Seven-joint arms (three-joint wrist) with the wider range of motion.
    pub fn humanoid_b() -> Self {
        Self::from_json(HUMANOID_B).expect("bundled humanoid_b config")
    }

    /// Bundled config by name (`humanoid_a` / `humanoid_b`).
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "humanoid_a" => Some(Self::humanoid_a()),
            "humanoid_b" => Some(Self::humanoid_b()),
            _ => None,
        }
    }

    pub fn arm(&self, side: crate::unified::Side) -> &KinematicChain {
        match side {
            crate::unified::Side::Left => &self.left_arm,
            crate::unified::Side::Right => &self.right_arm,
        }
    }

    pub fn arm_dof(&self) -> usize {
        self.left_arm.dof()
    }
}
