use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::loss::{loss_from, loss_grad_into, LossTerms};
use super::{PolicyError, PolicyModel};
use crate::dataset::{MixedSampler, TrainingPair};

/// Training pairs grouped by sampler source tag.
pub type PairSet = BTreeMap<String, Vec<TrainingPair>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub loss: LossTerms,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    /// Every `report_every`-th step and the last one.
    pub records: Vec<StepRecord>,
    pub steps: u64,
    pub final_loss: LossTerms,
    pub wall_time_s: f64,
}

/// Mean loss over `batch` and its gradient with respect to every parameter,
/// in the flat parameter layout.
pub fn backward(model: &PolicyModel, batch: &[&TrainingPair]) -> Result<(LossTerms, Vec<f64>), PolicyError> {
    let cfg = &model.config;
    let b = batch.len();
    let (din, dout) = (cfg.input_dim(), cfg.output_dim());
    let mut x = DMatrix::<f64>::zeros(din, b);
    let mut targets = Vec::with_capacity(b);
    for (j, p) in batch.iter().enumerate() {
        if p.action_chunk.len() != cfg.chunk_length {
            return Err(PolicyError::DimensionMismatch {
                expected: cfg.chunk_length,
                got: p.action_chunk.len(),
            });
        }
        if p.state.len() != cfg.proprio_dim || p.feature.len() != cfg.feature_dim {
            return Err(PolicyError::DimensionMismatch {
                expected: din,
                got: p.state.len() + p.feature.len(),
            });
        }
        let s = model.state_stats.normalize(&p.state, &p.embodiment_tag)?;
        let mut col = x.column_mut(j);
        for (i, v) in s.iter().chain(&p.feature).enumerate() {
            col[i] = *v;
        }
        let mut t = Vec::with_capacity(dout);
        for a in &p.action_chunk {
            t.extend(model.action_stats.normalize(a, &p.embodiment_tag)?);
        }
        targets.push(t);
    }
    let acts = model.activations(x);
    let out = acts.last().expect("output layer");
    let mut terms = LossTerms::default();
    let mut g = DMatrix::<f64>::zeros(dout, b);
    let scale = 1.0 / b as f64;
    for (j, t) in targets.iter().enumerate() {
        let pred = out.column(j);
        let l = loss_from(pred.as_slice(), t, cfg.lambda_eef, cfg.smoothing_delta, cfg.action_includes_head)?;
        terms.total += l.total * scale;
        terms.base += l.base * scale;
        terms.eef += l.eef * scale;
        let mut gj = g.column_mut(j);
        loss_grad_into(
            pred.as_slice(),
            t,
            cfg.lambda_eef,
            cfg.smoothing_delta,
            cfg.action_includes_head,
            scale,
            gj.as_mut_slice(),
        );
    }

    let shapes = model.shapes();
    let mut grad = vec![0.0; model.params().len()];
    for l in (0..shapes.len()).rev() {
        let s = &shapes[l];
        let dw = &g * acts[l].transpose();
        grad[s.offset..s.bias_offset()].copy_from_slice(dw.as_slice());
        for (gb, row) in grad[s.bias_offset()..s.end()].iter_mut().zip(g.row_iter()) {
            *gb = row.sum();
        }
        if l > 0 {
            let mut prev = model.weights(s).transpose() * &g;
            prev.zip_apply(&acts[l], |d, a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            g = prev;
        }
    }
    Ok((terms, grad))
}

/// Runs `steps` SGD steps on batches drawn from `sampler`, resuming from the
/// model's recorded sampler position.
pub fn train(
    model: &mut PolicyModel,
    pairs: &PairSet,
    sampler: &mut MixedSampler,
    steps: u64,
    report_every: u64,
) -> Result<TrainReport, PolicyError> {
    let sources: Vec<&Vec<TrainingPair>> = sampler
        .tags()
        .iter()
        .map(|t| pairs.get(*t).ok_or_else(|| PolicyError::UnknownSource(t.to_string())))
        .collect::<Result<_, _>>()?;
    sampler.seek(model.sampler_position);
    let start = Instant::now();
    let mut report = TrainReport::default();
    let bs = model.config.batch_size;
    for i in 0..steps {
        let mut batch = Vec::with_capacity(bs);
        for _ in 0..bs {
            let r = sampler.next_pair();
            let src = sources[r.tag];
            let pair = src.get(r.index).ok_or_else(|| {
                PolicyError::UnknownSource(format!("{}:{}", sampler.tag_name(r.tag), r.index))
            })?;
            batch.push(pair);
        }
        let (terms, mut grad) = backward(model, &batch)?;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let record = StepRecord {
            step: model.step,
            loss: terms,
            grad_norm: norm,
        };
        if !(terms.total.is_finite() && norm.is_finite()) {
            report.records.push(record);
            report.steps = i;
            report.wall_time_s = start.elapsed().as_secs_f64();
            return Err(PolicyError::NonFiniteLoss {
                step: model.step,
                report: Box::new(report),
            });
        }
        let clip = model.config.grad_clip;
        if clip > 0.0 && norm > clip {
            let s = clip / norm;
            grad.iter_mut().for_each(|g| *g *= s);
        }
        let lr = model.config.lr_at(model.step);
        for (p, g) in model.params_mut().iter_mut().zip(&grad) {
            *p -= lr * g;
        }
        model.step += 1;
        model.sampler_position = MixedSampler::position(sampler);
        report.final_loss = terms;
        if (report_every > 0 && i % report_every == 0) || i + 1 == steps {
            report.records.push(record);
        }
    }
    report.steps = steps;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::tests::small_config;
    use crate::policy::PolicyConfig;
    use crate::policy::layer_shapes;
    use crate::unified::NormalizationStats;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pair(rng: &mut ChaCha8Rng, cfg: &PolicyConfig, tag: &str, i: usize) -> TrainingPair {
        TrainingPair {
            episode_id: "e".into(),
            start: i,
            embodiment_tag: tag.into(),
            state: (0..cfg.proprio_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            feature: (0..cfg.feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            action_chunk: (0..cfg.chunk_length)
                .map(|_| {
                    let mut a = [0.0; 54];
                    a.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
                    a
                })
                .collect(),
        }
    }

    fn randomized_model(cfg: PolicyConfig, seed: u64) -> PolicyModel {
        let mut m = PolicyModel::new(cfg, NormalizationStats::identity(54), NormalizationStats::identity(54)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        m.params_mut().iter_mut().for_each(|p| *p = rng.random_range(-0.5..0.5));
        m
    }

    fn batch_loss(m: &PolicyModel, batch: &[&TrainingPair]) -> f64 {
        backward(m, batch).unwrap().0.total
    }

    #[test]
    fn gradients_match_central_differences() {
        for action_includes_head in [true, false] {
            let cfg = PolicyConfig {
                smoothing_delta: 1e-3,
                action_includes_head,
                ..small_config()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let pairs: Vec<TrainingPair> = (0..4).map(|i| random_pair(&mut rng, &cfg, "t", i)).collect();
            let batch: Vec<&TrainingPair> = pairs.iter().collect();
            let mut m = randomized_model(cfg, 4);
            let (_, grad) = backward(&m, &batch).unwrap();
            let h = 1e-5;
            let mut worst: f64 = 0.0;
            for i in 0..grad.len() {
                let p0 = m.params()[i];
                m.params_mut()[i] = p0 + h;
                let lp = batch_loss(&m, &batch);
                m.params_mut()[i] = p0 - h;
                let lm = batch_loss(&m, &batch);
                m.params_mut()[i] = p0;
                let fd = (lp - lm) / (2.0 * h);
                let denom = fd.abs().max(grad[i].abs()).max(1e-6);
                worst = worst.max((fd - grad[i]).abs() / denom);
            }
            assert!(worst < 1e-4, "head {action_includes_head}: max relative error {worst}");
        }
    }

    #[test]
    fn head_outputs_get_no_gradient_without_head() {
        let cfg = PolicyConfig {
            action_includes_head: false,
            ..small_config()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pairs: Vec<TrainingPair> = (0..3).map(|i| random_pair(&mut rng, &cfg, "t", i)).collect();
        let batch: Vec<&TrainingPair> = pairs.iter().collect();
        let m = randomized_model(cfg.clone(), 9);
        let (_, grad) = backward(&m, &batch).unwrap();
        let out = *layer_shapes(&cfg).last().unwrap();
        let bias = &grad[out.bias_offset()..out.end()];
        for step in 0..cfg.chunk_length {
            assert!(bias[step * 54..step * 54 + 6].iter().all(|g| *g == 0.0));
            assert!(bias[step * 54 + 6..step * 54 + 54].iter().any(|g| *g != 0.0));
        }
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let cfg = PolicyConfig {
            smoothing_delta: 1e-3,
            ..small_config()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = randomized_model(cfg.clone(), 6);
        let mut p = random_pair(&mut rng, &cfg, "t", 0);
        let y = m.forward(&p.state, &p.feature).unwrap();
        for (k, a) in p.action_chunk.iter_mut().enumerate() {
            a.copy_from_slice(&y[k * 54..(k + 1) * 54]);
        }
        let (terms, grad) = backward(&m, &[&p]).unwrap();
        assert_eq!(terms.total, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn single_layer_sign_test() {
        let cfg = PolicyConfig {
            hidden_layers: vec![],
            ..small_config()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_pair(&mut rng, &cfg, "t", 0);
        let mut m = randomized_model(cfg, 8);
        let (l0, grad) = backward(&m, &[&p]).unwrap();
        for i in [0, 17, 200, grad.len() - 1] {
            assert!(grad[i] != 0.0);
            let old = m.params()[i];
            m.params_mut()[i] = old - 1e-4 * grad[i].signum();
            assert!(batch_loss(&m, &[&p]) < l0.total);
            m.params_mut()[i] = old + 1e-4 * grad[i].signum();
            assert!(batch_loss(&m, &[&p]) > l0.total);
            m.params_mut()[i] = old;
        }
    }

    #[test]
    fn doubling_lambda_increases_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = small_config();
        let pairs: Vec<TrainingPair> = (0..3).map(|i| random_pair(&mut rng, &cfg, "t", i)).collect();
        let batch: Vec<&TrainingPair> = pairs.iter().collect();
        let m = randomized_model(cfg.clone(), 10);
        let mut m2 = m.clone();
        m2.config.lambda_eef = 2.0 * cfg.lambda_eef;
        let (a, _) = backward(&m, &batch).unwrap();
        let (b, _) = backward(&m2, &batch).unwrap();
        assert!(b.total > a.total);
        assert!((a.total - a.base - cfg.lambda_eef * a.eef).abs() < 1e-12);
    }

    fn single_source(pairs: Vec<TrainingPair>, seed: u64) -> (PairSet, MixedSampler) {
        let mut set = PairSet::new();
        let sizes = BTreeMap::from([("t".to_string(), pairs.len())]);
        set.insert("t".into(), pairs);
        (set, MixedSampler::proportional(&sizes, seed).unwrap())
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = PolicyConfig {
            learning_rate: 0.0,
            ..small_config()
        };
        let pairs = (0..10).map(|i| random_pair(&mut rng, &cfg, "t", i)).collect();
        let (set, mut sampler) = single_source(pairs, 1);
        let mut m = randomized_model(cfg, 12);
        let before = m.params().to_vec();
        train(&mut m, &set, &mut sampler, 20, 5).unwrap();
        assert_eq!(m.params(), &before[..]);
        assert_eq!(m.step, 20);
    }

    #[test]
    fn memorizes_constant_actions() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cfg = PolicyConfig {
            learning_rate: 1.0,
            decay_steps: 2000,
            final_lr_fraction: 0.0,
            ..small_config()
        };
        let mut action = [0.0; 54];
        action.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let pairs: Vec<TrainingPair> = (0..50)
            .map(|i| {
                let mut p = random_pair(&mut rng, &cfg, "t", i);
                p.action_chunk = vec![action; cfg.chunk_length];
                p
            })
            .collect();
        let (set, mut sampler) = single_source(pairs, 2);
        let mut m = PolicyModel::new(cfg, NormalizationStats::identity(54), NormalizationStats::identity(54)).unwrap();
        let report = train(&mut m, &set, &mut sampler, 2000, 100).unwrap();
        assert!(report.final_loss.total < 1e-3, "{:?}", report.final_loss);
    }

    #[test]
    fn resumed_training_matches_uninterrupted() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let cfg = PolicyConfig {
            learning_rate: 0.05,
            batch_size: 4,
            ..small_config()
        };
        let pairs: Vec<TrainingPair> = (0..13).map(|i| random_pair(&mut rng, &cfg, "t", i)).collect();
        let (set, mut s1) = single_source(pairs.clone(), 3);
        let mut full = PolicyModel::new(cfg.clone(), NormalizationStats::identity(54), NormalizationStats::identity(54)).unwrap();
        train(&mut full, &set, &mut s1, 30, 0).unwrap();

        let (_, mut s2) = single_source(pairs, 3);
        let mut part = PolicyModel::new(cfg, NormalizationStats::identity(54), NormalizationStats::identity(54)).unwrap();
        train(&mut part, &set, &mut s2, 12, 0).unwrap();
        let bytes = crate::policy::Checkpoint::from_model(&part).to_bytes();
        let mut resumed = crate::policy::Checkpoint::from_bytes(&bytes).unwrap().into_model().unwrap();
        let (_, mut fresh) = single_source(set["t"].clone(), 3);
        train(&mut resumed, &set, &mut fresh, 18, 0).unwrap();
        assert_eq!(resumed.step, full.step);
        let bits = |m: &PolicyModel| m.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&resumed), bits(&full));
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let cfg = small_config();
        let mut p = random_pair(&mut rng, &cfg, "t", 0);
        p.feature[0] = f64::NAN;
        let (set, mut sampler) = single_source(vec![p], 4);
        let mut m = randomized_model(cfg, 16);
        match train(&mut m, &set, &mut sampler, 5, 1) {
            Err(PolicyError::NonFiniteLoss { step: 0, report }) => assert_eq!(report.records.len(), 1),
            other => panic!("{other:?}"),
        }
    }
}
