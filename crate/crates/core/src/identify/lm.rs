use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{IdentificationResult, Method, Problem};
use crate::error::{CalibError, Result};
use crate::kinematics::{KinematicErrorVector, PARAMS};

/// Damped least squares.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    /// Damping added to the normal-matrix diagonal.
    pub lambda: f64,
    pub iterations: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self { lambda: 0.01, iterations: 20 }
    }
}

const STEP_TOLERANCE: f64 = 1e-10;
/// Relative eigenvalue floor below which `JᵀJ + λI` counts as singular.
const RANK_TOLERANCE: f64 = 1e-13;

/// Solves `(JᵀJ + λI) δ = Jᵀ E`.
pub fn lm_increment(jac: &DMatrix<f64>, residuals: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(CalibError::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    let mut normal = jac.transpose() * jac;
    for i in 0..normal.nrows() {
        normal[(i, i)] += lambda;
    }
    let rhs = jac.transpose() * residuals;
    let eig = normal.clone().symmetric_eigenvalues();
    let max = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if !(min > RANK_TOLERANCE * max) {
        return Err(CalibError::RankDeficient { lambda });
    }
    normal.cholesky().map(|c| c.solve(&rhs)).ok_or(CalibError::RankDeficient { lambda })
}

pub fn lm_identify(problem: &Problem<'_>, cfg: &LmConfig) -> Result<IdentificationResult> {
    lm_identify_from(problem, cfg, KinematicErrorVector::zeros())
}

/// Levenberg–Marquardt from `start`. A step that raises the training cost
/// is rejected and the damping grown tenfold, so the returned estimate is
/// never worse than `start`.
pub fn lm_identify_from(problem: &Problem<'_>, cfg: &LmConfig, start: KinematicErrorVector) -> Result<IdentificationResult> {
    let mut x = start;
    let mut cost = problem.mse(&x);
    let mut history = vec![cost.sqrt()];
    let mut lambda = cfg.lambda;
    let mut iterations = 0;
    for _ in 0..cfg.iterations {
        iterations += 1;
        let (jac, res) = problem.linearize(&x);
        let step = lm_increment(&jac, &res, lambda)?;
        if step.norm() < STEP_TOLERANCE {
            history.push(cost.sqrt());
            break;
        }
        let step: [f64; PARAMS] = step.as_slice().try_into().expect("24 parameters");
        let trial = x + KinematicErrorVector::from_flat(&step);
        let trial_cost = problem.mse(&trial);
        if trial_cost <= cost {
            x = trial;
            cost = trial_cost;
        } else {
            let scale = (jac.transpose() * &jac).diagonal().mean();
            lambda = (lambda * 10.0).max(1e-6 * scale);
        }
        history.push(cost.sqrt());
    }
    Ok(IdentificationResult { method: Method::Lm, x_hat: Some(x), residual_predictor: None, history, iterations })
}
