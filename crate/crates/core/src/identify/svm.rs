//! Kernel residual regressor.
//!
//! A single hidden layer driven by inner-product kernel features:
//! `h₁ = W₁ k(θ) + b₁`, `h₂ = logistic(h₁)`, `L' = w₂ · h₂ + b₂`, where
//! `k(θ)ⱼ = θ · θⱼ` against stored reference configurations `θⱼ`. Trained
//! by full-batch gradient descent (Adam moments) on
//! `½ λ₁ ‖w₂‖² + (1/2n) Σ (yᵢ − L'ᵢ)²`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{mean_square, IdentificationResult, Method, Problem};
use crate::error::{CalibError, Result};
use crate::kinematics::{JointConfig, KinematicErrorVector, JOINTS};

const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmInit {
    /// Standard deviation of the initial kernel weights.
    pub w1_sigma: f64,
    /// Standard deviation of the initial output weights (0 starts from a
    /// constant prediction `b2`).
    pub w2_sigma: f64,
    pub b1: f64,
    pub b2: f64,
}

impl Default for SvmInit {
    fn default() -> Self {
        Self { w1_sigma: 0.1, w2_sigma: 0.0, b1: 0.0, b2: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub hidden_width: usize,
    /// Number of training configurations kept as kernel references.
    pub n_references: usize,
    /// Weight of the `‖w₂‖²` penalty.
    pub lambda1: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub init: SvmInit,
    /// Fraction of the samples held out to pick the stopping epoch; 0
    /// keeps the epoch with the lowest training error instead.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            hidden_width: 8,
            n_references: 16,
            lambda1: 1e-3,
            learning_rate: 0.01,
            epochs: 1000,
            init: SvmInit::default(),
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SvmConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.n_references == 0 {
            return Err(CalibError::InvalidArgument("hidden_width and n_references must be >= 1".into()));
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return Err(CalibError::InvalidArgument("validation_fraction must lie in [0, 0.5)".into()));
        }
        if !(self.lambda1 >= 0.0) || !(self.learning_rate > 0.0) {
            return Err(CalibError::InvalidArgument("lambda1 must be >= 0 and learning_rate > 0".into()));
        }
        Ok(())
    }
}

/// Gradient of the training loss with respect to every trainable weight.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmGradient {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DVector<f64>,
    pub b2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmRegressor {
    /// Reference configurations, one per row.
    pub references: DMatrix<f64>,
    /// Hidden × reference kernel weights.
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DVector<f64>,
    pub b2: f64,
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn joints_matrix(inputs: &[JointConfig]) -> DMatrix<f64> {
    DMatrix::from_fn(inputs.len(), JOINTS, |i, j| inputs[i].0[j])
}

impl SvmRegressor {
    /// Regressor with the given weights; `references` holds one
    /// configuration per row.
    pub fn from_parts(references: DMatrix<f64>, w1: DMatrix<f64>, b1: DVector<f64>, w2: DVector<f64>, b2: f64) -> Self {
        assert_eq!(references.ncols(), JOINTS);
        assert_eq!(w1.ncols(), references.nrows());
        assert_eq!(w1.nrows(), b1.len());
        assert_eq!(w2.len(), b1.len());
        Self { references, w1, b1, w2, b2 }
    }

    pub fn hidden_width(&self) -> usize {
        self.b1.len()
    }

    fn kernel(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x * self.references.transpose()
    }

    /// Hidden activations (n × hidden) for a batch of kernel rows.
    fn hidden(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        let mut h = k * self.w1.transpose();
        for mut row in h.row_iter_mut() {
            for (v, b) in row.iter_mut().zip(self.b1.iter()) {
                *v = logistic(*v + b);
            }
        }
        h
    }

    pub fn predict(&self, joints: &JointConfig) -> f64 {
        self.predict_batch(std::slice::from_ref(joints))[0]
    }

    pub fn predict_batch(&self, inputs: &[JointConfig]) -> Vec<f64> {
        let h = self.hidden(&self.kernel(&joints_matrix(inputs)));
        (h * &self.w2).iter().map(|v| v + self.b2).collect()
    }

    /// Training loss `½ λ₁ ‖w₂‖² + (1/2n) Σ eᵢ²`.
    pub fn loss(&self, inputs: &[JointConfig], targets: &[f64], lambda1: f64) -> f64 {
        let pred = self.predict_batch(inputs);
        let sse: f64 = pred.iter().zip(targets).map(|(p, y)| (y - p).powi(2)).sum();
        0.5 * lambda1 * self.w2.norm_squared() + sse / (2.0 * targets.len() as f64)
    }

    /// Analytic gradient of [`SvmRegressor::loss`].
    pub fn gradient(&self, inputs: &[JointConfig], targets: &[f64], lambda1: f64) -> SvmGradient {
        let k = self.kernel(&joints_matrix(inputs));
        self.gradient_with_kernel(&k, targets, lambda1).1
    }

    fn gradient_with_kernel(&self, k: &DMatrix<f64>, targets: &[f64], lambda1: f64) -> (f64, SvmGradient) {
        let n = targets.len() as f64;
        let h = self.hidden(k);
        let pred = &h * &self.w2;
        let err = DVector::from_iterator(targets.len(), targets.iter().zip(pred.iter()).map(|(y, p)| y - p - self.b2));
        let mse = err.norm_squared() / n;

        let grad_w2 = -(h.transpose() * &err) / n + &self.w2 * lambda1;
        let grad_b2 = -err.sum() / n;
        let mut delta = h.clone();
        for (i, mut row) in delta.row_iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let a = *v;
                *v = -err[i] * self.w2[j] * a * (1.0 - a) / n;
            }
        }
        let grad_w1 = delta.transpose() * k;
        let grad_b1 = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
        (mse, SvmGradient { w1: grad_w1, b1: grad_b1, w2: grad_w2, b2: grad_b2 })
    }

    /// Flattened trainable weights: `W₁` (column-major), `b₁`, `w₂`, `b₂`.
    pub fn params(&self) -> Vec<f64> {
        self.w1.iter().chain(self.b1.iter()).chain(self.w2.iter()).copied().chain(std::iter::once(self.b2)).collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let (nw1, nh) = (self.w1.len(), self.b1.len());
        assert_eq!(flat.len(), nw1 + 2 * nh + 1);
        self.w1.as_mut_slice().copy_from_slice(&flat[..nw1]);
        self.b1.as_mut_slice().copy_from_slice(&flat[nw1..nw1 + nh]);
        self.w2.as_mut_slice().copy_from_slice(&flat[nw1 + nh..nw1 + 2 * nh]);
        self.b2 = flat[nw1 + 2 * nh];
    }
}

impl SvmGradient {
    /// Same layout as [`SvmRegressor::params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.w1.iter().chain(self.b1.iter()).chain(self.w2.iter()).copied().chain(std::iter::once(self.b2)).collect()
    }
}

/// Regressor initialized from `cfg.init`, with references spread evenly
/// over `inputs`.
pub(crate) fn initial_regressor(inputs: &[JointConfig], cfg: &SvmConfig) -> SvmRegressor {
    let n_ref = cfg.n_references.min(inputs.len());
    let references = DMatrix::from_fn(n_ref, JOINTS, |r, j| inputs[r * inputs.len() / n_ref].0[j]);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut normal = |sigma: f64| -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    };
    let w1 = DMatrix::from_fn(cfg.hidden_width, n_ref, |_, _| normal(cfg.init.w1_sigma));
    let w2 = DVector::from_fn(cfg.hidden_width, |_, _| normal(cfg.init.w2_sigma));
    SvmRegressor { references, w1, b1: DVector::from_element(cfg.hidden_width, cfg.init.b1), w2, b2: cfg.init.b2 }
}

/// Fits the regressor to `(inputs, targets)`.
///
/// With a validation fraction, a seeded random slice of the samples is held
/// out and the weights of the epoch with the lowest held-out error are
/// returned; otherwise the epoch with the lowest training error wins. Epoch
/// 0 (the initialization) is always a candidate. Also returns the
/// per-epoch RMSE on the fitted samples.
pub fn svm_fit_with_history(inputs: &[JointConfig], targets: &[f64], cfg: &SvmConfig) -> Result<(SvmRegressor, Vec<f64>)> {
    cfg.validate()?;
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(CalibError::InvalidArgument("inputs and targets must be non-empty and of equal length".into()));
    }
    let n_val = (cfg.validation_fraction * inputs.len() as f64).floor() as usize;
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    if n_val > 0 {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_5EED));
    }
    let (fit_idx, val_idx) = order.split_at(inputs.len() - n_val);
    let mut fit_idx = fit_idx.to_vec();
    fit_idx.sort_unstable();
    let fit_inputs: Vec<JointConfig> = fit_idx.iter().map(|&i| inputs[i]).collect();
    let fit_targets: Vec<f64> = fit_idx.iter().map(|&i| targets[i]).collect();
    let val_inputs: Vec<JointConfig> = val_idx.iter().map(|&i| inputs[i]).collect();
    let val_targets: Vec<f64> = val_idx.iter().map(|&i| targets[i]).collect();

    let mut model = initial_regressor(&fit_inputs, cfg);
    let k = model.kernel(&joints_matrix(&fit_inputs));

    let (beta1, beta2, eps) = (0.9, 0.999, 1e-8);
    let mut params = model.params();
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut best = (f64::INFINITY, model.clone());
    let mut history = Vec::with_capacity(cfg.epochs + 1);

    for epoch in 0..=cfg.epochs {
        let (mse, grad) = model.gradient_with_kernel(&k, &fit_targets, cfg.lambda1);
        let loss = 0.5 * cfg.lambda1 * model.w2.norm_squared() + 0.5 * mse;
        if !(loss.is_finite() && loss <= DIVERGENCE_LOSS) {
            return Err(CalibError::Diverged { epoch, loss });
        }
        history.push(mse.sqrt());
        let score = if val_inputs.is_empty() {
            mse
        } else {
            let pred = model.predict_batch(&val_inputs);
            mean_square(&pred.iter().zip(&val_targets).map(|(p, y)| y - p).collect::<Vec<_>>())
        };
        if score < best.0 {
            best = (score, model.clone());
        }
        if epoch == cfg.epochs {
            break;
        }
        let t = (epoch + 1) as i32;
        for (i, g) in grad.flatten().into_iter().enumerate() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / (1.0 - beta1.powi(t));
            let v_hat = v[i] / (1.0 - beta2.powi(t));
            params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
        model.set_params(&params);
    }
    Ok((best.1, history))
}

pub fn svm_fit(inputs: &[JointConfig], targets: &[f64], cfg: &SvmConfig) -> Result<SvmRegressor> {
    svm_fit_with_history(inputs, targets, cfg).map(|(m, _)| m)
}

/// Regressor fitted to the residuals of the nominal chain.
pub fn svm_identify(problem: &Problem<'_>, cfg: &SvmConfig) -> Result<IdentificationResult> {
    let inputs: Vec<JointConfig> = problem.dataset.samples().iter().map(|s| s.joints).collect();
    let targets = problem.residuals(&KinematicErrorVector::zeros());
    let (model, mut history) = svm_fit_with_history(&inputs, &targets, cfg)?;
    let pred = model.predict_batch(&inputs);
    let left: Vec<f64> = targets.iter().zip(&pred).map(|(y, p)| y - p).collect();
    history.insert(0, mean_square(&targets).sqrt());
    history.push(mean_square(&left).sqrt());
    Ok(IdentificationResult { method: Method::Svm, x_hat: None, residual_predictor: Some(model), history, iterations: cfg.epochs })
}
