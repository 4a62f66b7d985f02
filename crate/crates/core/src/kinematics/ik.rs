use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use super::chain::{jacobian_from_frames, KinematicChain};
use super::KinematicsError;
use crate::geometry::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkParams {
    pub damping: f64,
    pub max_iters: usize,
    /// Meters.
    pub pos_tol: f64,
    /// Radians.
    pub rot_tol: f64,
    /// Fraction of the DLS step applied per iteration, in `(0, 1]`.
    pub step_scale: f64,
    /// Scales orientation error against position error (meters per radian).
    /// Zero solves for position only.
    pub orientation_weight: f64,
}

impl Default for IkParams {
    fn default() -> Self {
        Self {
            damping: 0.05,
            max_iters: 100,
            pos_tol: 1e-3,
            rot_tol: 0.5f64.to_radians(),
            step_scale: 0.5,
            orientation_weight: 1.0,
        }
    }
}

impl IkParams {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let ok = self.damping > 0.0
            && self.max_iters > 0
            && self.pos_tol > 0.0
            && self.rot_tol > 0.0
            && self.step_scale > 0.0
            && self.step_scale <= 1.0
            && self.orientation_weight >= 0.0
            && self.orientation_weight.is_finite();
        if ok {
            Ok(())
        } else {
            Err(KinematicsError::InvalidParams(format!("{self:?}")))
        }
    }

    fn position_only(&self) -> bool {
        self.orientation_weight == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IkStatus {
    Converged,
    BestEffort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkSolution {
    pub q: Vec<f64>,
    pub status: IkStatus,
    pub iterations: usize,
    pub position_error: f64,
    pub orientation_error: f64,
    /// Joints clamped to a limit on the final configuration.
    pub clamped_joints: usize,
}

const MAX_HALVINGS: usize = 30;

struct Residual {
    e: Vector6<f64>,
    pos: f64,
    rot: f64,
}

fn residual(target: &Pose, current: &Pose, w: f64) -> Residual {
    let dp = target.translation - current.translation;
    let dr = target.rotation.compose(&current.rotation.transpose()).log();
    let mut e = Vector6::zeros();
    e.fixed_rows_mut::<3>(0).copy_from(&dp);
    e.fixed_rows_mut::<3>(3).copy_from(&(dr * w));
    Residual {
        e,
        pos: dp.norm(),
        rot: dr.norm(),
    }
}

fn dls_step(jac: &DMatrix<f64>, e: &Vector6<f64>, damp2: f64) -> Option<DVector<f64>> {
    let mut a = Matrix6::<f64>::zeros();
    a.copy_from(&(jac * jac.transpose()));
    for i in 0..6 {
        a[(i, i)] += damp2;
    }
    let y = a.cholesky()?.solve(e);
    Some(jac.transpose() * DVector::from_column_slice(y.as_slice()))
}

/// Damped least squares: `dq = J^T (J J^T + damping^2 I)^-1 e`, clamped to
/// joint limits after every step. Joints pressed against a limit drop out of
/// the step. A step is halved until it lowers the
/// weighted residual, so the iterate never gets worse.
pub fn ik_solve(
    chain: &KinematicChain,
    target: &Pose,
    q_init: &[f64],
    params: &IkParams,
) -> Result<IkSolution, KinematicsError> {
    if q_init.len() != chain.dof() {
        return Err(KinematicsError::DimensionMismatch {
            expected: chain.dof(),
            got: q_init.len(),
        });
    }
    if !target.is_finite() {
        return Err(KinematicsError::NonFiniteTarget);
    }
    if q_init.iter().any(|v| !v.is_finite()) {
        return Err(KinematicsError::NonFiniteTarget);
    }
    params.validate()?;
    let w = params.orientation_weight;
    let converged = |r: &Residual| {
        r.pos <= params.pos_tol && (params.position_only() || r.rot <= params.rot_tol)
    };
    let damp2 = params.damping * params.damping;

    let limits: Vec<(f64, f64)> = chain.limits().collect();
    let mut q = q_init.to_vec();
    chain.clamp(&mut q);
    let mut frames = chain.frames(&q)?;
    let mut r = residual(target, &frames.tip, w);
    let mut iterations = 0;
    while iterations < params.max_iters && !converged(&r) {
        let mut jac: DMatrix<f64> = jacobian_from_frames(&frames);
        if w != 1.0 {
            for mut row in jac.rows_mut(3, 3).row_iter_mut() {
                row *= w;
            }
        }
        // Joints resting on a limit that the step would push further out are
        // frozen and the step is recomputed with the remaining ones.
        let mut frozen = vec![false; q.len()];
        let dq = loop {
            let Some(dq) = dls_step(&jac, &r.e, damp2) else {
                break None;
            };
            let mut changed = false;
            for (i, (lo, hi)) in limits.iter().enumerate() {
                let pushes_out = (q[i] <= *lo && dq[i] < 0.0) || (q[i] >= *hi && dq[i] > 0.0);
                if !frozen[i] && pushes_out {
                    frozen[i] = true;
                    jac.column_mut(i).fill(0.0);
                    changed = true;
                }
            }
            if !changed {
                break Some(dq);
            }
        };
        let Some(dq) = dq else {
            break;
        };
        let mut scale = params.step_scale;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let mut trial: Vec<f64> = q.iter().zip(dq.iter()).map(|(qi, d)| qi + scale * d).collect();
            chain.clamp(&mut trial);
            let tf = chain.frames(&trial)?;
            let tr = residual(target, &tf.tip, w);
            if tr.e.norm_squared() < r.e.norm_squared() {
                (q, frames, r) = (trial, tf, tr);
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
        iterations += 1;
    }
    Ok(IkSolution {
        clamped_joints: chain.at_limit(&q),
        status: if converged(&r) {
            IkStatus::Converged
        } else {
            IkStatus::BestEffort
        },
        q,
        iterations,
        position_error: r.pos,
        orientation_error: r.rot,
    })
}
