use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::{GroupValues, IdentificationResult, Method, Problem};
use crate::error::{CalibError, Result};
use crate::kinematics::{apply_errors, KinematicErrorVector, PARAMS};
use crate::measurement::cable_length_row;

pub(crate) type Covariance = SMatrix<f64, PARAMS, PARAMS>;

/// Sequential extended Kalman filter over the training samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EkfConfig {
    /// Prior standard deviations; `P0` is their squared diagonal.
    pub p0_sigma: GroupValues,
    /// Per-sample process-noise standard deviations (`Q`).
    pub q_sigma: GroupValues,
    /// Measurement-noise variance (mm²).
    pub r: f64,
    /// Sweeps over the training data.
    pub passes: usize,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self { p0_sigma: GroupValues::new(1.0, 0.005), q_sigma: GroupValues::new(0.0, 0.0), r: 0.01, passes: 3 }
    }
}

impl EkfConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        self.p0_sigma.validate_nonneg("EKF p0_sigma")?;
        self.q_sigma.validate_nonneg("EKF q_sigma")?;
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(CalibError::InvalidArgument(format!("EKF r must be >= 0, got {}", self.r)));
        }
        Ok(())
    }

    pub(crate) fn p0(&self) -> Covariance {
        Covariance::from_diagonal(&SVector::from(self.p0_sigma.expand().map(|s| s * s)))
    }

    pub(crate) fn q(&self) -> Covariance {
        Covariance::from_diagonal(&SVector::from(self.q_sigma.expand().map(|s| s * s)))
    }
}

/// Scalar-measurement Kalman update. Applies the gain to `x` and the
/// covariance update `P ← (I − K hᵀ) P`, then symmetrizes `P`.
///
/// Returns the gain, or `None` when the innovation variance `hᵀPh + r` is
/// not strictly positive.
pub fn kalman_update<const N: usize>(
    x: &mut SVector<f64, N>,
    p: &mut SMatrix<f64, N, N>,
    h: &SVector<f64, N>,
    innovation: f64,
    r: f64,
) -> Option<SVector<f64, N>> {
    let ph = *p * h;
    let s = h.dot(&ph) + r;
    if !(s > 0.0 && s.is_finite()) {
        return None;
    }
    let gain = ph / s;
    *x += gain * innovation;
    let updated = (SMatrix::<f64, N, N>::identity() - gain * h.transpose()) * *p;
    *p = (updated + updated.transpose()) * 0.5;
    Some(gain)
}

/// One sweep over the samples: predict (`P += Q`), linearize the cable
/// length at the current estimate and update.
pub(crate) fn ekf_pass(
    problem: &Problem<'_>,
    x: &mut KinematicErrorVector,
    p: &mut Covariance,
    q: &Covariance,
    r: f64,
    observer: &mut dyn FnMut(&Covariance),
) -> Result<()> {
    let mut state = x.to_vector();
    for (k, sample) in problem.dataset.samples().iter().enumerate() {
        *p += q;
        let chain = apply_errors(problem.nominal, &KinematicErrorVector::from_vector(&state));
        let (predicted, row) = cable_length_row(problem.model, &chain, &sample.joints);
        let innovation = sample.measured_length - predicted;
        kalman_update(&mut state, p, &row, innovation, r).ok_or(CalibError::SingularInnovation { sample: k })?;
        observer(p);
    }
    *x = KinematicErrorVector::from_vector(&state);
    Ok(())
}

pub fn ekf_identify(problem: &Problem<'_>, cfg: &EkfConfig) -> Result<IdentificationResult> {
    ekf_identify_traced(problem, cfg, &mut |_| {})
}

/// As [`ekf_identify`], calling `observer` with the posterior covariance
/// after every sample update.
pub fn ekf_identify_traced(
    problem: &Problem<'_>,
    cfg: &EkfConfig,
    observer: &mut dyn FnMut(&Covariance),
) -> Result<IdentificationResult> {
    cfg.validate()?;
    let mut x = KinematicErrorVector::zeros();
    let mut p = cfg.p0();
    let q = cfg.q();
    let mut history = vec![problem.rmse(&x)];
    for _ in 0..cfg.passes {
        ekf_pass(problem, &mut x, &mut p, &q, cfg.r, observer)?;
        history.push(problem.rmse(&x));
    }
    Ok(IdentificationResult { method: Method::Ekf, x_hat: Some(x), residual_predictor: None, history, iterations: cfg.passes })
}
