//! Hybrid identifiers: EKF-refined particle filter (EPF), GA followed by
//! LM polishing (LMGA), and GA followed by a kernel regressor on the
//! remaining residuals (SGA).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ekf::{ekf_pass, Covariance, EkfConfig};
use super::ga::{ga_identify, GaConfig};
use super::lm::{lm_identify_from, LmConfig};
use super::pf::{effective_sample_size, particle_weights, sample_around, systematic_resample, weighted_mean, PfConfig};
use super::svm::{svm_fit_with_history, SvmConfig};
use super::{mean_square, GroupValues, IdentificationResult, Method, Problem};
use crate::error::Result;
use crate::kinematics::{JointConfig, KinematicErrorVector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpfConfig {
    pub pf: PfConfig,
    pub ekf: EkfConfig,
}

impl Default for EpfConfig {
    fn default() -> Self {
        Self {
            pf: PfConfig {
                n_particles: 24,
                iterations: 3,
                diffusion_sigma: GroupValues::new(0.02, 0.0001),
                ..PfConfig::default()
            },
            ekf: EkfConfig::default(),
        }
    }
}

/// Particle filter whose particles each carry an EKF covariance and are
/// refined by one EKF sweep over the training samples before weighting.
pub fn epf_identify(problem: &Problem<'_>, cfg: &EpfConfig) -> Result<IdentificationResult> {
    epf_identify_traced(problem, cfg, &mut |_, _| {})
}

pub fn epf_identify_traced(
    problem: &Problem<'_>,
    cfg: &EpfConfig,
    observer: &mut dyn FnMut(usize, &[f64]),
) -> Result<IdentificationResult> {
    let (pf, ekf) = (&cfg.pf, &cfg.ekf);
    pf.validate()?;
    ekf.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(pf.seed);
    let prior = pf.prior_sigma.expand();
    let p0 = ekf.p0();
    let q = ekf.q();
    let mut particles: Vec<(KinematicErrorVector, Covariance)> =
        (0..pf.n_particles).map(|_| (sample_around(&mut rng, &pf.prior_mean, &prior), p0)).collect();
    let mut diffusion = pf.diffusion_sigma.expand();
    let mut estimate = pf.prior_mean;
    let mut history = vec![problem.rmse(&KinematicErrorVector::zeros())];

    for it in 0..pf.iterations {
        for (x, p) in particles.iter_mut() {
            *x = sample_around(&mut rng, x, &diffusion);
            for (k, s) in diffusion.iter().enumerate() {
                p[(k, k)] += s * s;
            }
        }
        particles = particles
            .into_par_iter()
            .map(|(mut x, mut p)| ekf_pass(problem, &mut x, &mut p, &q, ekf.r, &mut |_| {}).map(|_| (x, p)))
            .collect::<Result<Vec<_>>>()?;

        let states: Vec<KinematicErrorVector> = particles.iter().map(|(x, _)| *x).collect();
        let weights = particle_weights(problem, &states, pf.r, it)?;
        observer(it, &weights);
        estimate = weighted_mean(&states, &weights);
        history.push(problem.rmse(&estimate));

        if effective_sample_size(&weights) < pf.resample_threshold * pf.n_particles as f64 {
            let idx = systematic_resample(&weights, rng.random::<f64>());
            particles = idx.into_iter().map(|i| particles[i]).collect();
        }
        diffusion = diffusion.map(|s| s * pf.diffusion_decay);
    }
    Ok(IdentificationResult { method: Method::Epf, x_hat: Some(estimate), residual_predictor: None, history, iterations: pf.iterations })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmgaConfig {
    pub ga: GaConfig,
    pub lm: LmConfig,
}

/// Genetic global search, then Levenberg–Marquardt started at the GA best.
pub fn lmga_identify(problem: &Problem<'_>, cfg: &LmgaConfig) -> Result<IdentificationResult> {
    let global = ga_identify(problem, &cfg.ga)?;
    let start = global.x_hat.expect("GA yields an error vector");
    let polished = lm_identify_from(problem, &cfg.lm, start)?;
    let mut history = global.history;
    history.extend_from_slice(&polished.history[1..]);
    Ok(IdentificationResult {
        method: Method::Lmga,
        x_hat: polished.x_hat,
        residual_predictor: None,
        history,
        iterations: global.iterations + polished.iterations,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgaConfig {
    pub ga: GaConfig,
    pub svm: SvmConfig,
}

/// Genetic identification of the geometric errors, then a kernel
/// regressor fitted to what the corrected chain still misses. The
/// regressor is dropped if it does not lower the training error.
pub fn sga_identify(problem: &Problem<'_>, cfg: &SgaConfig) -> Result<IdentificationResult> {
    let geometric = ga_identify(problem, &cfg.ga)?;
    let x_hat = geometric.x_hat.expect("GA yields an error vector");
    let inputs: Vec<JointConfig> = problem.dataset.samples().iter().map(|s| s.joints).collect();
    let targets = problem.residuals(&x_hat);
    let (regressor, svm_history) = svm_fit_with_history(&inputs, &targets, &cfg.svm)?;

    let pred = regressor.predict_batch(&inputs);
    let left: Vec<f64> = targets.iter().zip(&pred).map(|(y, p)| y - p).collect();
    let before = mean_square(&targets);
    let after = mean_square(&left);
    let mut history = geometric.history;
    let residual_predictor = if after <= before {
        history.extend_from_slice(&svm_history[1..]);
        history.push(after.sqrt());
        Some(regressor)
    } else {
        history.push(before.sqrt());
        None
    };
    Ok(IdentificationResult {
        method: Method::Sga,
        x_hat: Some(x_hat),
        residual_predictor,
        history,
        iterations: geometric.iterations + cfg.svm.epochs,
    })
}
