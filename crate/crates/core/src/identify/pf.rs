use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_square, GroupValues, IdentificationResult, Method, Problem};
use crate::error::{CalibError, Result};
use crate::kinematics::{KinematicErrorVector, PARAMS};

/// Particle filter over the error vector, weighting each particle by the
/// Gaussian likelihood of the whole training residual vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PfConfig {
    pub n_particles: usize,
    /// Mean of the initial particle cloud.
    pub prior_mean: KinematicErrorVector,
    /// Spread of the initial particle cloud.
    pub prior_sigma: GroupValues,
    /// State-transition noise added to every particle each iteration.
    pub diffusion_sigma: GroupValues,
    /// Multiplier applied to `diffusion_sigma` after every iteration.
    pub diffusion_decay: f64,
    /// Per-sample residual variance used in the weights (mm²).
    pub r: f64,
    pub iterations: usize,
    /// Resample when the effective sample size drops below this fraction of N.
    pub resample_threshold: f64,
    pub seed: u64,
}

impl Default for PfConfig {
    fn default() -> Self {
        Self {
            n_particles: 500,
            prior_mean: KinematicErrorVector::zeros(),
            prior_sigma: GroupValues::new(1.0, 0.005),
            diffusion_sigma: GroupValues::new(0.1, 0.0005),
            diffusion_decay: 0.95,
            r: 0.25,
            iterations: 60,
            resample_threshold: 0.5,
            seed: 0,
        }
    }
}

impl PfConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(CalibError::InvalidArgument("particle count must be >= 1".into()));
        }
        self.prior_sigma.validate_nonneg("PF prior_sigma")?;
        self.diffusion_sigma.validate_nonneg("PF diffusion_sigma")?;
        if !self.prior_mean.is_finite() {
            return Err(CalibError::InvalidArgument("PF prior_mean must be finite".into()));
        }
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(CalibError::InvalidArgument(format!("PF r must be >= 0, got {}", self.r)));
        }
        if !(0.0..=1.0).contains(&self.resample_threshold) {
            return Err(CalibError::InvalidArgument("resample_threshold must lie in [0, 1]".into()));
        }
        if !(self.diffusion_decay > 0.0 && self.diffusion_decay.is_finite()) {
            return Err(CalibError::InvalidArgument("diffusion_decay must be > 0".into()));
        }
        Ok(())
    }
}

/// Indices drawn by systematic resampling with offset `u0 ∈ [0, 1)`.
pub fn systematic_resample(weights: &[f64], u0: f64) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut cumulative = weights[0];
    let mut i = 0;
    for m in 0..n {
        let u = (u0 + m as f64) / n as f64;
        while u > cumulative && i + 1 < n {
            i += 1;
            cumulative += weights[i];
        }
        out.push(i);
    }
    out
}

pub(crate) fn sample_around(
    rng: &mut ChaCha8Rng,
    mean: &KinematicErrorVector,
    sigma: &[f64; PARAMS],
) -> KinematicErrorVector {
    let base = mean.to_flat();
    KinematicErrorVector::from_flat(&std::array::from_fn(|k| {
        let z: f64 = StandardNormal.sample(rng);
        base[k] + sigma[k] * z
    }))
}

/// Log of the Gaussian residual likelihood, up to a constant shared by
/// every particle.
fn log_likelihood(sum_sq: f64, r: f64) -> f64 {
    if r > 0.0 {
        -0.5 * sum_sq / r
    } else if sum_sq == 0.0 {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

/// Normalized weights from per-particle log likelihoods.
pub(crate) fn normalize_log_weights(log_w: &[f64], iteration: usize) -> Result<Vec<f64>> {
    let max = log_w.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(CalibError::DegenerateWeights { iteration });
    }
    let raw: Vec<f64> = log_w.iter().map(|&l| if l.is_finite() { (l - max).exp() } else { 0.0 }).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

pub(crate) fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

pub(crate) fn weighted_mean(particles: &[KinematicErrorVector], weights: &[f64]) -> KinematicErrorVector {
    let mut acc = [0.0; PARAMS];
    for (p, &w) in particles.iter().zip(weights) {
        for (a, v) in acc.iter_mut().zip(p.to_flat()) {
            *a += w * v;
        }
    }
    KinematicErrorVector::from_flat(&acc)
}

/// Weights of `particles` against the training residuals.
pub(crate) fn particle_weights(problem: &Problem<'_>, particles: &[KinematicErrorVector], r: f64, iteration: usize) -> Result<Vec<f64>> {
    let n = problem.dataset.len() as f64;
    let log_w: Vec<f64> = particles.par_iter().map(|x| log_likelihood(mean_square(&problem.residuals(x)) * n, r)).collect();
    normalize_log_weights(&log_w, iteration)
}

pub fn pf_identify(problem: &Problem<'_>, cfg: &PfConfig) -> Result<IdentificationResult> {
    pf_identify_traced(problem, cfg, &mut |_, _| {})
}

/// As [`pf_identify`], passing the normalized weights of every iteration
/// to `observer`.
pub fn pf_identify_traced(
    problem: &Problem<'_>,
    cfg: &PfConfig,
    observer: &mut dyn FnMut(usize, &[f64]),
) -> Result<IdentificationResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let prior = cfg.prior_sigma.expand();
    let mut particles: Vec<KinematicErrorVector> =
        (0..cfg.n_particles).map(|_| sample_around(&mut rng, &cfg.prior_mean, &prior)).collect();
    let mut diffusion = cfg.diffusion_sigma.expand();
    let mut estimate = cfg.prior_mean;
    let mut history = vec![problem.rmse(&KinematicErrorVector::zeros())];

    for it in 0..cfg.iterations {
        for p in particles.iter_mut() {
            *p = sample_around(&mut rng, p, &diffusion);
        }
        let weights = particle_weights(problem, &particles, cfg.r, it)?;
        observer(it, &weights);
        estimate = weighted_mean(&particles, &weights);
        history.push(problem.rmse(&estimate));

        if effective_sample_size(&weights) < cfg.resample_threshold * cfg.n_particles as f64 {
            let idx = systematic_resample(&weights, rng.random::<f64>());
            particles = idx.into_iter().map(|i| particles[i]).collect();
        }
        diffusion = diffusion.map(|s| s * cfg.diffusion_decay);
    }
    Ok(IdentificationResult { method: Method::Pf, x_hat: Some(estimate), residual_predictor: None, history, iterations: cfg.iterations })
}
