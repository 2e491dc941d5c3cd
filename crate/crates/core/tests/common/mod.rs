#![allow(dead_code)]

use armcal::kinematics::{DhChain, DhLink, JointConfig, KinematicErrorVector, JOINTS};
use armcal::measurement::{
    random_error_vector, scale_to_rmse, simulate_dataset, CableEncoderModel, Dataset, JointRanges, NonGeometricError,
    SimulationSpec,
};
use rand::Rng;

pub fn random_chain(rng: &mut impl Rng) -> DhChain {
    let links: [DhLink; JOINTS] = std::array::from_fn(|_| {
        DhLink::new(
            rng.random_range(-400.0..400.0),
            rng.random_range(-400.0..400.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        )
        .unwrap()
    });
    DhChain::new(links).unwrap()
}

pub fn random_joints(rng: &mut impl Rng) -> JointConfig {
    JointConfig(std::array::from_fn(|_| rng.random_range(-3.0..3.0)))
}

/// Small error vector within the bounds used by the recovery examples.
pub fn small_errors(seed: u64) -> KinematicErrorVector {
    random_error_vector(1.0, 0.005, seed).unwrap()
}

pub struct Scenario {
    pub model: CableEncoderModel,
    pub nominal: DhChain,
    pub truth: KinematicErrorVector,
    pub train: Dataset,
    pub test: Dataset,
}

/// Default arm and encoder, errors scaled to the given pre-calibration
/// RMSE, `n_train`/`n_test` samples with noise `sigma`.
pub fn scenario(seed: u64, n_train: usize, n_test: usize, sigma: f64, rmse: Option<f64>, disturbance: f64) -> Scenario {
    let model = CableEncoderModel::default();
    let nominal = DhChain::default_arm();
    let ranges = JointRanges::default();
    let mut truth = small_errors(seed);
    if let Some(target) = rmse {
        truth = scale_to_rmse(&model, &nominal, &truth, &ranges, target, seed + 1000).unwrap();
    }
    let disturbance = (disturbance > 0.0).then_some(NonGeometricError { amplitude: disturbance });
    let spec = SimulationSpec { n: n_train, noise_sigma: sigma, seed, ranges, disturbance };
    let train = simulate_dataset(&model, &nominal, &truth, &spec).unwrap();
    let spec = SimulationSpec { n: n_test, seed: seed + 500, ..spec };
    let test = simulate_dataset(&model, &nominal, &truth, &spec).unwrap();
    Scenario { model, nominal, truth, train, test }
}

pub fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt()
}
