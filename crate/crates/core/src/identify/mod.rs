//! Base identification algorithms.
//!
//! Every identifier consumes a [`Problem`] (encoder model, nominal chain and
//! training data) and returns an [`IdentificationResult`]. Geometric
//! identifiers estimate the 24-component error vector; the kernel regressor
//! learns a residual correction directly; SGA does both.

mod ekf;
mod ga;
mod hybrid;
mod lm;
mod pf;
mod svm;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::kinematics::{apply_errors, DhChain, JointConfig, KinematicErrorVector, ParamGroup, PARAMS};
use crate::measurement::{cable_length_row, nominal_cable_length, CableEncoderModel, Dataset};

pub use ekf::{ekf_identify, ekf_identify_traced, kalman_update, EkfConfig};
pub use ga::{ga_identify, GaConfig};
pub use hybrid::{epf_identify, epf_identify_traced, lmga_identify, sga_identify, EpfConfig, LmgaConfig, SgaConfig};
pub use lm::{lm_identify, lm_identify_from, lm_increment, LmConfig};
pub use pf::{pf_identify, pf_identify_traced, systematic_resample, PfConfig};
pub use svm::{svm_fit, svm_identify, SvmConfig, SvmGradient, SvmInit, SvmRegressor};

/// One value for the length groups (Δa, Δd; mm) and one for the angle
/// groups (Δθ, Δα; rad).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupValues {
    pub length: f64,
    pub angle: f64,
}

impl GroupValues {
    pub const fn new(length: f64, angle: f64) -> Self {
        Self { length, angle }
    }

    pub fn for_index(&self, k: usize) -> f64 {
        if ParamGroup::of_index(k).is_length() {
            self.length
        } else {
            self.angle
        }
    }

    pub fn expand(&self) -> [f64; PARAMS] {
        std::array::from_fn(|k| self.for_index(k))
    }

    pub(crate) fn validate_nonneg(&self, name: &str) -> Result<()> {
        if self.length >= 0.0 && self.angle >= 0.0 && self.length.is_finite() && self.angle.is_finite() {
            Ok(())
        } else {
            Err(CalibError::InvalidArgument(format!("{name} must be finite and >= 0")))
        }
    }
}

/// Calibration problem shared by all identifiers.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a> {
    pub model: &'a CableEncoderModel,
    pub nominal: &'a DhChain,
    pub dataset: &'a Dataset,
}

impl<'a> Problem<'a> {
    pub fn new(model: &'a CableEncoderModel, nominal: &'a DhChain, dataset: &'a Dataset) -> Self {
        Self { model, nominal, dataset }
    }

    /// Residuals `measured − predicted` of the chain corrected by `x`.
    pub fn residuals(&self, x: &KinematicErrorVector) -> Vec<f64> {
        let chain = apply_errors(self.nominal, x);
        self.dataset
            .samples()
            .iter()
            .map(|s| s.measured_length - nominal_cable_length(self.model, &chain, &s.joints))
            .collect()
    }

    /// Mean squared residual, the least-squares objective.
    pub fn mse(&self, x: &KinematicErrorVector) -> f64 {
        mean_square(&self.residuals(x))
    }

    pub fn rmse(&self, x: &KinematicErrorVector) -> f64 {
        self.mse(x).sqrt()
    }

    /// Stacked cable-length Jacobian rows and residuals at `nominal + x`.
    pub fn linearize(&self, x: &KinematicErrorVector) -> (DMatrix<f64>, DVector<f64>) {
        let chain = apply_errors(self.nominal, x);
        let n = self.dataset.len();
        let mut jac = DMatrix::zeros(n, PARAMS);
        let mut res = DVector::zeros(n);
        for (i, s) in self.dataset.samples().iter().enumerate() {
            let (len, row) = cable_length_row(self.model, &chain, &s.joints);
            jac.row_mut(i).copy_from(&row.transpose());
            res[i] = s.measured_length - len;
        }
        (jac, res)
    }

    /// Length change `L(nominal + x) − L(nominal)` at each sample.
    pub fn length_shift(&self, x: &KinematicErrorVector) -> Vec<f64> {
        let chain = apply_errors(self.nominal, x);
        self.dataset
            .samples()
            .iter()
            .map(|s| nominal_cable_length(self.model, &chain, &s.joints) - nominal_cable_length(self.model, self.nominal, &s.joints))
            .collect()
    }
}

pub(crate) fn mean_square(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64
}

/// The eight base identifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ekf,
    Lm,
    Pf,
    Svm,
    Ga,
    Epf,
    Lmga,
    Sga,
}

impl Method {
    /// Presentation order, also the default ensemble stage order.
    pub const ALL: [Method; 8] =
        [Method::Ekf, Method::Lm, Method::Pf, Method::Svm, Method::Ga, Method::Epf, Method::Lmga, Method::Sga];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ekf => "ekf",
            Method::Lm => "lm",
            Method::Pf => "pf",
            Method::Svm => "svm",
            Method::Ga => "ga",
            Method::Epf => "epf",
            Method::Lmga => "lmga",
            Method::Sga => "sga",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Method {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s)).ok_or_else(|| {
            let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
            CalibError::InvalidArgument(format!("unknown method `{s}` (valid: {})", names.join(", ")))
        })
    }
}

/// Output of one identifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentificationResult {
    pub method: Method,
    /// Estimated geometric error vector; absent for the pure kernel regressor.
    pub x_hat: Option<KinematicErrorVector>,
    /// Learned residual correction applied on top of `x_hat`.
    pub residual_predictor: Option<SvmRegressor>,
    /// Training RMSE (mm): entry 0 is the starting point, then one per iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
}

impl IdentificationResult {
    /// Predicted length correction relative to the nominal chain (mm).
    pub fn predict_residual(&self, model: &CableEncoderModel, nominal: &DhChain, joints: &JointConfig) -> f64 {
        let geometric = self.x_hat.as_ref().map_or(0.0, |x| {
            nominal_cable_length(model, &apply_errors(nominal, x), joints) - nominal_cable_length(model, nominal, joints)
        });
        geometric + self.residual_predictor.as_ref().map_or(0.0, |p| p.predict(joints))
    }

    /// Residuals left after applying this correction to `dataset`.
    pub fn corrected_residuals(&self, model: &CableEncoderModel, nominal: &DhChain, dataset: &Dataset) -> Vec<f64> {
        dataset
            .samples()
            .iter()
            .map(|s| s.measured_length - nominal_cable_length(model, nominal, &s.joints) - self.predict_residual(model, nominal, &s.joints))
            .collect()
    }

    pub fn final_rmse(&self) -> f64 {
        *self.history.last().expect("history is non-empty")
    }
}

/// Configuration of every identifier, as read from a run configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifierConfigs {
    pub ekf: EkfConfig,
    pub lm: LmConfig,
    pub pf: PfConfig,
    pub svm: SvmConfig,
    pub ga: GaConfig,
    pub epf: EpfConfig,
    pub lmga: LmgaConfig,
    pub sga: SgaConfig,
}

impl IdentifierConfigs {
    /// Derives every stochastic identifier's seed from one base seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        let mix = |k: u64| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k);
        self.pf.seed = mix(1);
        self.svm.seed = mix(2);
        self.ga.seed = mix(3);
        self.epf.pf.seed = mix(4);
        self.lmga.ga.seed = mix(5);
        self.sga.ga.seed = mix(6);
        self.sga.svm.seed = mix(7);
        self
    }
}

/// Runs `method` on `problem` with its block of `configs`.
pub fn identify(method: Method, problem: &Problem<'_>, configs: &IdentifierConfigs) -> Result<IdentificationResult> {
    match method {
        Method::Ekf => ekf_identify(problem, &configs.ekf),
        Method::Lm => lm_identify(problem, &configs.lm),
        Method::Pf => pf_identify(problem, &configs.pf),
        Method::Svm => svm_identify(problem, &configs.svm),
        Method::Ga => ga_identify(problem, &configs.ga),
        Method::Epf => epf_identify(problem, &configs.epf),
        Method::Lmga => lmga_identify(problem, &configs.lmga),
        Method::Sga => sga_identify(problem, &configs.sga),
    }
}
