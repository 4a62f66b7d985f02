//! EEF-weighted L1 loss over action chunks.
//!
//! `total = base + lambda * eef`, where `base` is the mean absolute residual
//! over all `K x 54` entries and `eef` the mean over the six wrist
//! translation entries of every step. With `delta > 0` the absolute value is
//! replaced by the Huber function `r^2 / (2 delta)` for `|r| <= delta` and
//! `|r| - delta / 2` beyond.
//!
//! When the action excludes the head, `base` averages over the `K x 48`
//! non-head entries instead.

use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::unified::{eef_indices, HEAD_ROT, STATE_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub base: f64,
    pub eef: f64,
}

fn phi(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if delta > 0.0 && a <= delta {
        r * r / (2.0 * delta)
    } else if delta > 0.0 {
        a - 0.5 * delta
    } else {
        a
    }
}

/// Derivative of [`phi`]; the subgradient at zero is zero.
fn dphi(r: f64, delta: f64) -> f64 {
    if delta > 0.0 && r.abs() <= delta {
        r / delta
    } else if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check(pred: &[f64], target: &[f64]) -> Result<usize, PolicyError> {
    if pred.len() != target.len() || pred.is_empty() || pred.len() % STATE_DIM != 0 {
        return Err(PolicyError::DimensionMismatch {
            expected: target.len(),
            got: pred.len(),
        });
    }
    Ok(pred.len() / STATE_DIM)
}

/// Loss of one `K x 54` chunk (row-major).
pub fn loss(pred: &[f64], target: &[f64], lambda_eef: f64, delta: f64) -> Result<LossTerms, PolicyError> {
    loss_from(pred, target, lambda_eef, delta, true)
}

/// [`loss`] with the head rotation entries left out of `base`.
pub fn loss_without_head(pred: &[f64], target: &[f64], lambda_eef: f64, delta: f64) -> Result<LossTerms, PolicyError> {
    loss_from(pred, target, lambda_eef, delta, false)
}

fn first_dim(include_head: bool) -> usize {
    if include_head {
        0
    } else {
        HEAD_ROT.end
    }
}

pub(crate) fn loss_from(
    pred: &[f64],
    target: &[f64],
    lambda_eef: f64,
    delta: f64,
    include_head: bool,
) -> Result<LossTerms, PolicyError> {
    let k = check(pred, target)?;
    let first = first_dim(include_head);
    let eef = eef_indices();
    let mut base = 0.0;
    let mut eef_sum = 0.0;
    for (p, t) in pred.chunks_exact(STATE_DIM).zip(target.chunks_exact(STATE_DIM)) {
        for d in first..STATE_DIM {
            base += phi(p[d] - t[d], delta);
        }
        for &d in &eef {
            eef_sum += phi(p[d] - t[d], delta);
        }
    }
    let base = base / (k * (STATE_DIM - first)) as f64;
    let eef_mean = eef_sum / (k * eef.len()) as f64;
    Ok(LossTerms {
        total: base + lambda_eef * eef_mean,
        base,
        eef: eef_mean,
    })
}

/// Gradient of [`loss`]`.total` with respect to `pred`, scaled by `scale`
/// and accumulated into `out`.
pub(crate) fn loss_grad_into(
    pred: &[f64],
    target: &[f64],
    lambda_eef: f64,
    delta: f64,
    include_head: bool,
    scale: f64,
    out: &mut [f64],
) {
    let k = pred.len() / STATE_DIM;
    let first = first_dim(include_head);
    let wb = scale / (k * (STATE_DIM - first)) as f64;
    let eef = eef_indices();
    let we = scale * lambda_eef / (k * eef.len()) as f64;
    for (row, (p, t)) in out
        .chunks_exact_mut(STATE_DIM)
        .zip(pred.chunks_exact(STATE_DIM).zip(target.chunks_exact(STATE_DIM)))
    {
        for d in first..STATE_DIM {
            row[d] += wb * dphi(p[d] - t[d], delta);
        }
        for &d in &eef {
            row[d] += we * dphi(p[d] - t[d], delta);
        }
    }
}
