//! Raw capture ingestion, processed dataset storage, training pairs and the
//! mixed-embodiment sampler.

mod features;
mod ingest;
mod pairs;
mod raw;
mod sampler;
mod store;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::KinematicsError;
use crate::retiming::RetimingError;
use crate::unified::{StateVector, UnifiedError, UnifiedState};

pub use features::{FeatureProvider, HashFeatures};
pub use ingest::{canonical_frame, ingest, ingest_all, ingest_with, IngestOptions, DEFAULT_OUT_RATE};
pub use pairs::{extract_pairs, extract_pairs_with, DEFAULT_CHUNK, DEFAULT_STRIDE};
pub use raw::{RawCapture, RawMeta, RawRecord};
pub use sampler::{MixedSampler, PairRef};
pub use store::{
    dataset_stats, read_dataset, update_stats, validate_dataset, write_dataset, Dataset, DatasetManifest,
    DatasetStats, ManifestEntry, StatsFiles, EPISODE_MAGIC, FORMAT_VERSION,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("episode mixes pose-form and joint-form records")]
    MixedForms,
    #[error("meta.json declares kind {declared:?} but records are {found:?}")]
    KindMismatch { declared: EpisodeKind, found: EpisodeKind },
    #[error("robot episodes require an embodiment config")]
    MissingConfig,
    #[error("fewer than two proprio frames could be paired with visual frames ({paired} paired, {dropped} dropped)")]
    FrameSyncExhausted { paired: usize, dropped: usize },
    #[error("head moved {excursion:.3} m, above the {threshold:.3} m limit")]
    BodyMotionRejected { excursion: f64, threshold: f64 },
    #[error("feature dimension {got} does not match {expected}")]
    FeatureDim { expected: usize, got: usize },
    #[error("checksum mismatch for episode {0}")]
    ChecksumMismatch(String),
    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),
    #[error("corrupt episode file {file}: {reason}")]
    Corrupt { file: String, reason: String },
    #[error("episode has {frames} frames, needs at least {needed}")]
    EpisodeTooShort { frames: usize, needed: usize },
    #[error("sampler source {0:?} is empty")]
    EmptySource(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Retiming(#[from] RetimingError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Unified(#[from] UnifiedError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl DatasetError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeKind {
    Human,
    Robot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetadata {
    pub device: String,
    #[serde(default)]
    pub scene: String,
    pub duration_s: f64,
    pub retimed: bool,
    pub alpha_applied: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeFrame {
    pub t: f64,
    pub state: UnifiedState,
    pub feature: Vec<f64>,
    /// Flat joint readings for robot episodes (see `RobotCommand::to_flat`),
    /// empty for human episodes.
    pub joints: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemonstrationEpisode {
    pub id: String,
    pub embodiment_tag: String,
    pub kind: EpisodeKind,
    pub instruction: String,
    pub frames: Vec<EpisodeFrame>,
    pub metadata: EpisodeMetadata,
}

impl DemonstrationEpisode {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.frames.first().map_or(0, |f| f.feature.len())
    }

    pub fn joint_dim(&self) -> usize {
        self.frames.first().map_or(0, |f| f.joints.len())
    }

    pub fn duration(&self) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

/// One policy input with its target chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub episode_id: String,
    /// Index of the state frame within its episode.
    pub start: usize,
    pub embodiment_tag: String,
    pub state: Vec<f64>,
    pub feature: Vec<f64>,
    /// `K` consecutive actions following the state frame.
    pub action_chunk: Vec<StateVector>,
}
