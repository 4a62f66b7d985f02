//! Processed dataset directory:
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/episodes/<id>.bin
//! <dir>/stats/state.json, <dir>/stats/action.json   (optional)
//! ```
//!
//! Episode files are a fixed header followed by little-endian `f64` rows of
//! `t, state[54], feature[F], joints[J]`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DatasetError, DemonstrationEpisode, EpisodeFrame, EpisodeKind, EpisodeMetadata};
use crate::par;
use crate::unified::{
    compute_stats, NormalizationMode, NormalizationStats, UnifiedState, DEFAULT_FINGERTIP_BOUND,
    STATE_DIM,
};

pub const FORMAT_VERSION: u32 = 1;
pub const EPISODE_MAGIC: [u8; 4] = *b"XBEP";
const HEADER_LEN: usize = 4 + 4 + 8 + 4 + 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub embodiment_tag: String,
    pub kind: EpisodeKind,
    pub instruction: String,
    pub frame_count: usize,
    pub joint_dim: usize,
    pub file: String,
    pub sha256: String,
    pub metadata: EpisodeMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsFiles {
    pub state: String,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub feature_dim: usize,
    pub episodes: Vec<ManifestEntry>,
    #[serde(default)]
    pub stats_files: Option<StatsFiles>,
}

/// Normalization statistics for policy inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub state: NormalizationStats,
    pub action: NormalizationStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub episodes: Vec<DemonstrationEpisode>,
    pub stats: Option<DatasetStats>,
}

/// State stats over every frame; action stats over every frame that follows
/// another frame of its episode, i.e. every frame that can be a target.
pub fn dataset_stats(
    episodes: &[DemonstrationEpisode],
    mode: NormalizationMode,
    epsilon: f64,
) -> Result<DatasetStats, DatasetError> {
    let vectors: Vec<(&str, Vec<[f64; STATE_DIM]>)> = episodes
        .iter()
        .map(|e| {
            (
                e.embodiment_tag.as_str(),
                e.frames.iter().map(|f| f.state.to_vector()).collect(),
            )
        })
        .collect();
    let state = compute_stats(
        vectors
            .iter()
            .flat_map(|(tag, vs)| vs.iter().map(move |v| (*tag, v.as_slice()))),
        mode,
        epsilon,
    )?;
    let action = compute_stats(
        vectors
            .iter()
            .flat_map(|(tag, vs)| vs.iter().skip(1).map(move |v| (*tag, v.as_slice()))),
        mode,
        epsilon,
    )?;
    Ok(DatasetStats { state, action })
}

fn check_id(id: &str) -> Result<(), DatasetError> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(DatasetError::InvalidArgument(format!(
            "episode id {id:?} is not a safe file name"
        )))
    }
}

fn encode_episode(ep: &DemonstrationEpisode) -> Result<Vec<u8>, DatasetError> {
    let fdim = ep.feature_dim();
    let jdim = ep.joint_dim();
    let row = 1 + STATE_DIM + fdim + jdim;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * row * ep.len());
    out.extend_from_slice(&EPISODE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(ep.len() as u64).to_le_bytes());
    out.extend_from_slice(&(fdim as u32).to_le_bytes());
    out.extend_from_slice(&(jdim as u32).to_le_bytes());
    for (i, f) in ep.frames.iter().enumerate() {
        if f.feature.len() != fdim || f.joints.len() != jdim {
            return Err(DatasetError::InvalidArgument(format!(
                "episode {} frame {i} has inconsistent feature/joint dimensions",
                ep.id
            )));
        }
        out.extend_from_slice(&f.t.to_le_bytes());
        for v in f.state.to_vector().iter().chain(&f.feature).chain(&f.joints) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn decode_episode(bytes: &[u8], entry: &ManifestEntry) -> Result<Vec<EpisodeFrame>, DatasetError> {
    let corrupt = |reason: String| DatasetError::Corrupt {
        file: entry.file.clone(),
        reason,
    };
    if bytes.len() < HEADER_LEN || bytes[..4] != EPISODE_MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    if version == 0 || version > FORMAT_VERSION {
        return Err(DatasetError::VersionUnsupported(version));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let fdim = u32_at(16) as usize;
    let jdim = u32_at(20) as usize;
    if count != entry.frame_count || jdim != entry.joint_dim {
        return Err(corrupt(format!(
            "header says {count} frames / {jdim} joints, manifest {} / {}",
            entry.frame_count, entry.joint_dim
        )));
    }
    let row = 1 + STATE_DIM + fdim + jdim;
    if bytes.len() != HEADER_LEN + 8 * row * count {
        return Err(corrupt("length does not match header".into()));
    }
    let values: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    values
        .chunks_exact(row)
        .map(|r| {
            Ok(EpisodeFrame {
                t: r[0],
                state: UnifiedState::from_vector_unchecked(&r[1..1 + STATE_DIM])?,
                feature: r[1 + STATE_DIM..1 + STATE_DIM + fdim].to_vec(),
                joints: r[1 + STATE_DIM + fdim..].to_vec(),
            })
        })
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    std::fs::write(path, bytes).map_err(|e| DatasetError::io(path, e))
}

/// Writes episodes (in order) and optional stats, then the manifest.
pub fn write_dataset(
    dir: &Path,
    episodes: &[DemonstrationEpisode],
    stats: Option<&DatasetStats>,
) -> Result<DatasetManifest, DatasetError> {
    let feature_dim = episodes.first().map_or(0, |e| e.feature_dim());
    let mut seen = std::collections::BTreeSet::new();
    for ep in episodes {
        check_id(&ep.id)?;
        if !seen.insert(ep.id.as_str()) {
            return Err(DatasetError::InvalidArgument(format!("duplicate episode id {:?}", ep.id)));
        }
        if ep.is_empty() {
            return Err(DatasetError::EpisodeTooShort { frames: 0, needed: 1 });
        }
        if ep.feature_dim() != feature_dim {
            return Err(DatasetError::FeatureDim {
                expected: feature_dim,
                got: ep.feature_dim(),
            });
        }
    }
    let episodes_dir = dir.join("episodes");
    std::fs::create_dir_all(&episodes_dir).map_err(|e| DatasetError::io(&episodes_dir, e))?;
    let encoded = par::map(episodes, encode_episode);
    let mut entries = Vec::with_capacity(episodes.len());
    for (ep, bytes) in episodes.iter().zip(encoded) {
        let bytes = bytes?;
        let file = format!("episodes/{}.bin", ep.id);
        write_file(&dir.join(&file), &bytes)?;
        entries.push(ManifestEntry {
            id: ep.id.clone(),
            embodiment_tag: ep.embodiment_tag.clone(),
            kind: ep.kind,
            instruction: ep.instruction.clone(),
            frame_count: ep.len(),
            joint_dim: ep.joint_dim(),
            file,
            sha256: hex::encode(Sha256::digest(&bytes)),
            metadata: ep.metadata.clone(),
        });
    }
    let stats_files = match stats {
        Some(s) => Some(write_stats(dir, s)?),
        None => None,
    };
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        feature_dim,
        episodes: entries,
        stats_files,
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<(), DatasetError> {
    let text = serde_json::to_string_pretty(manifest)? + "\n";
    write_file(&dir.join("manifest.json"), text.as_bytes())
}

fn write_stats(dir: &Path, stats: &DatasetStats) -> Result<StatsFiles, DatasetError> {
    let stats_dir = dir.join("stats");
    std::fs::create_dir_all(&stats_dir).map_err(|e| DatasetError::io(&stats_dir, e))?;
    let files = StatsFiles {
        state: "stats/state.json".into(),
        action: "stats/action.json".into(),
    };
    write_file(&dir.join(&files.state), (stats.state.to_json() + "\n").as_bytes())?;
    write_file(&dir.join(&files.action), (stats.action.to_json() + "\n").as_bytes())?;
    Ok(files)
}

/// Adds or replaces the stats of an existing dataset directory.
pub fn update_stats(dir: &Path, stats: &DatasetStats) -> Result<DatasetManifest, DatasetError> {
    let mut manifest = read_manifest(dir)?;
    manifest.stats_files = Some(write_stats(dir, stats)?);
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

fn read_manifest(dir: &Path) -> Result<DatasetManifest, DatasetError> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| DatasetError::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.format_version == 0 || manifest.format_version > FORMAT_VERSION {
        return Err(DatasetError::VersionUnsupported(manifest.format_version));
    }
    Ok(manifest)
}

fn read_stats_file(path: &Path) -> Result<NormalizationStats, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    Ok(NormalizationStats::from_json(&text)?)
}

/// Reads a dataset, verifying every episode checksum.
pub fn read_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let manifest = read_manifest(dir)?;
    let mut episodes = Vec::with_capacity(manifest.episodes.len());
    for entry in &manifest.episodes {
        let path = dir.join(&entry.file);
        let bytes = std::fs::read(&path).map_err(|e| DatasetError::io(&path, e))?;
        if hex::encode(Sha256::digest(&bytes)) != entry.sha256 {
            return Err(DatasetError::ChecksumMismatch(entry.id.clone()));
        }
        let frames = decode_episode(&bytes, entry)?;
        episodes.push(DemonstrationEpisode {
            id: entry.id.clone(),
            embodiment_tag: entry.embodiment_tag.clone(),
            kind: entry.kind,
            instruction: entry.instruction.clone(),
            frames,
            metadata: entry.metadata.clone(),
        });
    }
    let stats = match &manifest.stats_files {
        Some(f) => Some(DatasetStats {
            state: read_stats_file(&dir.join(&f.state))?,
            action: read_stats_file(&dir.join(&f.action))?,
        }),
        None => None,
    };
    Ok(Dataset {
        manifest,
        episodes,
        stats,
    })
}

fn check_stats(name: &str, s: &NormalizationStats, issues: &mut Vec<String>) {
    if s.entries.is_empty() {
        issues.push(format!("{name} stats have no entries"));
    }
    for (tag, e) in &s.entries {
        if e.mean.len() != STATE_DIM || e.std.len() != STATE_DIM {
            issues.push(format!("{name} stats for {tag:?} are not {STATE_DIM}-dimensional"));
        }
        if e.mean.iter().any(|v| !v.is_finite()) || e.std.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            issues.push(format!("{name} stats for {tag:?} contain invalid values"));
        }
    }
}

/// Checks dataset invariants; returns one message per violation.
pub fn validate_dataset(ds: &Dataset) -> Vec<String> {
    let mut issues = Vec::new();
    let mut ids = std::collections::BTreeSet::new();
    for ep in &ds.episodes {
        let id = &ep.id;
        if !ids.insert(id.as_str()) {
            issues.push(format!("duplicate episode id {id:?}"));
        }
        if ep.is_empty() {
            issues.push(format!("{id}: no frames"));
            continue;
        }
        if ep.feature_dim() != ds.manifest.feature_dim {
            issues.push(format!(
                "{id}: feature dimension {} differs from manifest {}",
                ep.feature_dim(),
                ds.manifest.feature_dim
            ));
        }
        if let Some(i) = ep.frames.windows(2).position(|w| !(w[1].t > w[0].t)) {
            issues.push(format!("{id}: timestamps not increasing at frame {}", i + 1));
        }
        for (i, f) in ep.frames.iter().enumerate() {
            if let Err(e) = f.state.validate(DEFAULT_FINGERTIP_BOUND) {
                issues.push(format!("{id}: frame {i}: {e}"));
                break;
            }
            if f.feature.len() != ep.feature_dim() || f.feature.iter().any(|v| !v.is_finite()) {
                issues.push(format!("{id}: frame {i}: invalid feature vector"));
                break;
            }
        }
        let m = &ep.metadata;
        match ep.kind {
            EpisodeKind::Human if !(m.retimed && m.alpha_applied > 1.0) => {
                issues.push(format!("{id}: human episode not retimed"));
            }
            EpisodeKind::Robot if m.retimed || m.alpha_applied != 1.0 => {
                issues.push(format!("{id}: robot episode must keep alpha_applied = 1"));
            }
            _ => {}
        }
        if m.duration_s != ep.duration() {
            issues.push(format!("{id}: duration_s {} does not match frames", m.duration_s));
        }
    }
    if let Some(s) = &ds.stats {
        check_stats("state", &s.state, &mut issues);
        check_stats("action", &s.action, &mut issues);
    }
    issues
}
