//! Binary checkpoint: magic `XBCK`, `u32` version, `u64` header length, a
//! JSON header, then every parameter as a little-endian `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PolicyConfig, PolicyError, PolicyModel};
use crate::unified::NormalizationStats;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"XBCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: PolicyConfig,
    step: u64,
    sampler_position: u64,
    param_count: usize,
    state_stats: NormalizationStats,
    action_stats: NormalizationStats,
    state_stats_sha256: String,
    action_stats_sha256: String,
}

fn stats_digest(s: &NormalizationStats) -> String {
    hex::encode(Sha256::digest(s.to_json().as_bytes()))
}

/// Everything needed to resume training or serve predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: PolicyConfig,
    pub step: u64,
    pub sampler_position: u64,
    pub params: Vec<f64>,
    pub state_stats: NormalizationStats,
    pub action_stats: NormalizationStats,
}

impl Checkpoint {
    pub fn from_model(m: &PolicyModel) -> Self {
        Self {
            config: m.config.clone(),
            step: m.step,
            sampler_position: m.sampler_position,
            params: m.params().to_vec(),
            state_stats: m.state_stats.clone(),
            action_stats: m.action_stats.clone(),
        }
    }

    pub fn into_model(self) -> Result<PolicyModel, PolicyError> {
        let mut m = PolicyModel::from_parts(self.config, self.params, self.state_stats, self.action_stats)?;
        m.step = self.step;
        m.sampler_position = self.sampler_position;
        Ok(m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            step: self.step,
            sampler_position: self.sampler_position,
            param_count: self.params.len(),
            state_stats: self.state_stats.clone(),
            action_stats: self.action_stats.clone(),
            state_stats_sha256: stats_digest(&self.state_stats),
            action_stats_sha256: stats_digest(&self.action_stats),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + 8 * self.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, PolicyError> {
        let corrupt = |m: &str| PolicyError::CorruptCheckpoint(m.into());
        if b.len() < 16 || &b[..4] != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(b[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(PolicyError::VersionUnsupported(version));
        }
        let hlen = u64::from_le_bytes(b[8..16].try_into().unwrap());
        let hend = usize::try_from(hlen)
            .ok()
            .and_then(|h| h.checked_add(16))
            .filter(|e| *e <= b.len())
            .ok_or_else(|| corrupt("header length exceeds file"))?;
        let header: Header =
            serde_json::from_slice(&b[16..hend]).map_err(|e| corrupt(&format!("header: {e}")))?;
        if header.format_version != version {
            return Err(corrupt("header version disagrees with preamble"));
        }
        if header.param_count != header.config.param_count() {
            return Err(corrupt("parameter count does not match the architecture"));
        }
        if stats_digest(&header.state_stats) != header.state_stats_sha256
            || stats_digest(&header.action_stats) != header.action_stats_sha256
        {
            return Err(corrupt("normalization stats digest mismatch"));
        }
        let body = &b[hend..];
        if body.len() != 8 * header.param_count {
            return Err(corrupt(&format!(
                "expected {} parameter bytes, found {}",
                8 * header.param_count,
                body.len()
            )));
        }
        let params = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            config: header.config,
            step: header.step,
            sampler_position: header.sampler_position,
            params,
            state_stats: header.state_stats,
            action_stats: header.action_stats,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| PolicyError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let b = std::fs::read(path).map_err(|e| PolicyError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_bytes(&b)
    }
}
