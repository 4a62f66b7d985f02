//! Chunked-action behavior cloning: an MLP from `(state, feature)` to `K`
//! future unified actions, trained with hand-written gradients.

mod checkpoint;
mod loss;
mod train;

use nalgebra::{DMatrix, DMatrixView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::unified::{ActionChunk, NormalizationStats, UnifiedError, UnifiedState, HEAD_ROT, STATE_DIM};

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{loss, loss_without_head, LossTerms};
pub use train::{backward, train, PairSet, StepRecord, TrainReport};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid policy config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64, report: Box<TrainReport> },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("unsupported checkpoint version {0}")]
    VersionUnsupported(u32),
    #[error("training pair source {0:?} is not in the sampler")]
    UnknownSource(String),
    #[error(transparent)]
    Unified(#[from] UnifiedError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub proprio_dim: usize,
    pub feature_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub chunk_length: usize,
    pub lambda_eef: f64,
    pub learning_rate: f64,
    /// Linear decay of the learning rate to `learning_rate * final_lr_fraction`
    /// over `decay_steps`; 0 keeps it constant.
    pub decay_steps: u64,
    pub final_lr_fraction: f64,
    pub batch_size: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
    pub smoothing_delta: f64,
    /// When false the head rotation is not learned: the loss skips it and
    /// predictions hold the observed head rotation.
    pub action_includes_head: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            proprio_dim: STATE_DIM,
            feature_dim: 16,
            hidden_layers: vec![256, 256],
            chunk_length: 30,
            lambda_eef: 2.0,
            learning_rate: 1e-3,
            decay_steps: 0,
            final_lr_fraction: 1.0,
            batch_size: 32,
            grad_clip: 1.0,
            seed: 0,
            smoothing_delta: 0.0,
            action_includes_head: true,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::InvalidConfig(m.into()));
        if self.proprio_dim == 0 || self.chunk_length == 0 || self.batch_size == 0 {
            return bad("dimensions, chunk length and batch size must be positive");
        }
        if self.hidden_layers.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if !(self.lambda_eef >= 0.0 && self.lambda_eef.is_finite()) {
            return bad("lambda_eef must be finite and >= 0");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return bad("final_lr_fraction must lie in [0, 1]");
        }
        if !(self.grad_clip >= 0.0) || !(self.smoothing_delta >= 0.0) {
            return bad("grad_clip and smoothing_delta must be >= 0");
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.proprio_dim + self.feature_dim
    }

    pub fn output_dim(&self) -> usize {
        self.chunk_length * STATE_DIM
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(&self.hidden_layers);
        w.push(self.output_dim());
        w
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Learning rate at global step `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.decay_steps == 0 {
            return self.learning_rate;
        }
        let u = (step as f64 / self.decay_steps as f64).min(1.0);
        self.learning_rate * (1.0 - (1.0 - self.final_lr_fraction) * u)
    }
}

/// Offsets of one layer in the flat parameter vector. Weights are stored
/// column-major (`out x in`), followed by the bias.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub offset: usize,
}

impl LayerShape {
    pub fn weights_len(&self) -> usize {
        self.inputs * self.outputs
    }

    pub fn bias_offset(&self) -> usize {
        self.offset + self.weights_len()
    }

    pub fn end(&self) -> usize {
        self.bias_offset() + self.outputs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    pub config: PolicyConfig,
    params: Vec<f64>,
    pub state_stats: NormalizationStats,
    pub action_stats: NormalizationStats,
    /// Optimizer steps taken so far.
    pub step: u64,
    /// Sampler draws consumed so far.
    pub sampler_position: u64,
}

impl PolicyModel {
    /// He-uniform hidden layers, zero biases and a zero output layer, so an
    /// untrained model predicts the mean action.
    pub fn new(
        config: PolicyConfig,
        state_stats: NormalizationStats,
        action_stats: NormalizationStats,
    ) -> Result<Self, PolicyError> {
        config.validate()?;
        if state_stats.dim() != config.proprio_dim {
            return Err(PolicyError::DimensionMismatch {
                expected: config.proprio_dim,
                got: state_stats.dim(),
            });
        }
        if action_stats.dim() != STATE_DIM {
            return Err(PolicyError::DimensionMismatch {
                expected: STATE_DIM,
                got: action_stats.dim(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = vec![0.0; config.param_count()];
        let shapes = layer_shapes(&config);
        for s in &shapes[..shapes.len() - 1] {
            let bound = (6.0 / s.inputs as f64).sqrt();
            for p in &mut params[s.offset..s.bias_offset()] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(Self {
            config,
            params,
            state_stats,
            action_stats,
            step: 0,
            sampler_position: 0,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub(crate) fn from_parts(
        config: PolicyConfig,
        params: Vec<f64>,
        state_stats: NormalizationStats,
        action_stats: NormalizationStats,
    ) -> Result<Self, PolicyError> {
        if params.len() != config.param_count() {
            return Err(PolicyError::DimensionMismatch {
                expected: config.param_count(),
                got: params.len(),
            });
        }
        let mut m = Self::new(config, state_stats, action_stats)?;
        m.params = params;
        Ok(m)
    }

    pub(crate) fn shapes(&self) -> Vec<LayerShape> {
        layer_shapes(&self.config)
    }

    pub(crate) fn weights(&self, s: &LayerShape) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.params[s.offset..s.bias_offset()], s.outputs, s.inputs)
    }

    pub(crate) fn bias(&self, s: &LayerShape) -> &[f64] {
        &self.params[s.bias_offset()..s.end()]
    }

    /// Activations of every layer for a batch of input columns; the first
    /// entry is the input, the last the linear output.
    pub(crate) fn activations(&self, input: DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let shapes = self.shapes();
        let mut acts = Vec::with_capacity(shapes.len() + 1);
        acts.push(input);
        for (l, s) in shapes.iter().enumerate() {
            let mut z = self.weights(s) * &acts[l];
            let b = self.bias(s);
            for mut col in z.column_iter_mut() {
                for (v, bi) in col.iter_mut().zip(b) {
                    *v += bi;
                }
            }
            if l + 1 < shapes.len() {
                z.apply(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    fn input_column(&self, state_norm: &[f64], feature: &[f64]) -> Result<Vec<f64>, PolicyError> {
        if state_norm.len() != self.config.proprio_dim {
            return Err(PolicyError::DimensionMismatch {
                expected: self.config.proprio_dim,
                got: state_norm.len(),
            });
        }
        if feature.len() != self.config.feature_dim {
            return Err(PolicyError::DimensionMismatch {
                expected: self.config.feature_dim,
                got: feature.len(),
            });
        }
        let mut x = Vec::with_capacity(self.config.input_dim());
        x.extend_from_slice(state_norm);
        x.extend_from_slice(feature);
        Ok(x)
    }

    /// Normalized `K x 54` chunk (row-major) for a normalized state.
    pub fn forward(&self, state_norm: &[f64], feature: &[f64]) -> Result<Vec<f64>, PolicyError> {
        let x = self.input_column(state_norm, feature)?;
        let n = x.len();
        let acts = self.activations(DMatrix::from_vec(n, 1, x));
        Ok(acts.last().expect("output layer").as_slice().to_vec())
    }

    /// Last hidden layer for a normalized state.
    pub fn penultimate(&self, state_norm: &[f64], feature: &[f64]) -> Result<Vec<f64>, PolicyError> {
        let x = self.input_column(state_norm, feature)?;
        let n = x.len();
        let acts = self.activations(DMatrix::from_vec(n, 1, x));
        Ok(acts[acts.len() - 2].as_slice().to_vec())
    }

    /// Physical-unit chunk: normalize, forward, denormalize each action with
    /// the stats of `tag`, then re-orthogonalize the rotation blocks.
    pub fn predict(&self, state: &[f64], feature: &[f64], tag: &str) -> Result<ActionChunk, PolicyError> {
        let s = self.state_stats.normalize(state, tag)?;
        let y = self.forward(&s, feature)?;
        let actions = y
            .chunks_exact(STATE_DIM)
            .map(|a| {
                let mut v = self.action_stats.denormalize(a, tag)?;
                if !self.config.action_includes_head {
                    v[HEAD_ROT].copy_from_slice(&state[HEAD_ROT]);
                }
                let u = UnifiedState::from_vector_unchecked(&v)?;
                u.orthogonalized().map_err(|e| {
                    PolicyError::Unified(UnifiedError::InvalidComponent {
                        component: "rotation",
                        reason: e.to_string(),
                    })
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ActionChunk { actions })
    }
}

pub(crate) fn layer_shapes(config: &PolicyConfig) -> Vec<LayerShape> {
    let widths = config.widths();
    let mut offset = 0;
    widths
        .windows(2)
        .map(|w| {
            let s = LayerShape {
                inputs: w[0],
                outputs: w[1],
                offset,
            };
            offset = s.end();
            s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unified::{compute_stats, NormalizationMode};

    pub(crate) fn small_config() -> PolicyConfig {
        PolicyConfig {
            feature_dim: 3,
            hidden_layers: vec![8, 6],
            chunk_length: 2,
            ..PolicyConfig::default()
        }
    }

    #[test]
    fn zero_output_layer_gives_zero_chunk() {
        let cfg = small_config();
        let m = PolicyModel::new(cfg.clone(), NormalizationStats::identity(54), NormalizationStats::identity(54)).unwrap();
        let y = m.forward(&[0.3; 54], &[1.0, -1.0, 0.5]).unwrap();
        assert_eq!(y.len(), 2 * 54);
        assert!(y.iter().all(|v| *v == 0.0));
        assert_eq!(m.params().len(), (57 * 8 + 8) + (8 * 6 + 6) + (6 * 108 + 108));
        assert!(matches!(
            m.forward(&[0.0; 53], &[0.0; 3]),
            Err(PolicyError::DimensionMismatch { expected: 54, got: 53 })
        ));
    }

    #[test]
    fn forward_is_deterministic() {
        let mut m = PolicyModel::new(small_config(), NormalizationStats::identity(54), NormalizationStats::identity(54)).unwrap();
        let n = m.params().len();
        for (i, p) in m.params_mut().iter_mut().enumerate().skip(n - 700) {
            *p = (i as f64 * 0.37).sin();
        }
        let a = m.forward(&[0.1; 54], &[0.2, 0.3, 0.4]).unwrap();
        let m2 = PolicyModel::from_parts(m.config.clone(), m.params().to_vec(), m.state_stats.clone(), m.action_stats.clone()).unwrap();
        let b = m2.forward(&[0.1; 54], &[0.2, 0.3, 0.4]).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert!(a.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn identity_stats_predict_equals_forward() {
        let m = PolicyModel::new(small_config(), NormalizationStats::identity(54), NormalizationStats::identity(54)).unwrap();
        let state = UnifiedState::from_vector(&{
            let mut v = [0.0; 54];
            for b in 0..3 {
                v[6 * b..6 * b + 6].copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
            }
            v
        })
        .unwrap()
        .to_vector();
        // zero output: forward is all zeros, which does not decode as a rotation
        assert!(m.predict(&state, &[0.0; 3], "any").is_err());
        let mut stats = NormalizationStats::identity(54);
        let mean = &mut stats.entries.get_mut("shared").unwrap().mean;
        mean.copy_from_slice(&state);
        let m = PolicyModel::new(small_config(), NormalizationStats::identity(54), stats).unwrap();
        let chunk = m.predict(&state, &[0.0; 3], "any").unwrap();
        assert_eq!(chunk.len(), 2);
        assert_eq!(chunk.actions[0].to_vector(), state);
    }

    #[test]
    fn predictions_hold_the_observed_head_without_head() {
        let cfg = PolicyConfig {
            action_includes_head: false,
            ..small_config()
        };
        let pose = |yaw: f64| {
            let r = crate::geometry::RotationMatrix::from_yaw_pitch_roll(yaw, 0.0, 0.0);
            let p = crate::geometry::Pose::new(r, crate::geometry::Vec3::new(0.3, 0.1, 0.0));
            UnifiedState::from_poses(&r, &p, &p, [crate::geometry::Vec3::zeros(); 10]).to_vector()
        };
        let mut stats = NormalizationStats::identity(54);
        stats.entries.get_mut("shared").unwrap().mean.copy_from_slice(&pose(0.0));
        let m = PolicyModel::new(cfg, NormalizationStats::identity(54), stats).unwrap();
        let state = pose(0.7);
        let chunk = m.predict(&state, &[0.0; 3], "any").unwrap();
        let a = chunk.actions[1].to_vector();
        assert_eq!(a[HEAD_ROT], state[HEAD_ROT]);
        assert_eq!(a[6..], pose(0.0)[6..]);
    }

    #[test]
    fn stats_dimension_checked() {
        let rows = [vec![0.0; 10], vec![1.0; 10]];
        let s = compute_stats(rows.iter().map(|r| ("t", r.as_slice())), NormalizationMode::Shared, 1e-6).unwrap();
        assert!(PolicyModel::new(small_config(), s, NormalizationStats::identity(54)).is_err());
    }
}
