//! Cable-encoder measurement model, synthetic data generation and the
//! dataset CSV format.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{SVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, CalibError, Result};
use crate::kinematics::{
    apply_errors, end_effector_position, forward_kinematics, parameter_jacobian, DhChain, JointConfig,
    KinematicErrorVector, ParamGroup, JOINTS, PARAMS,
};

/// Drawstring encoder fixed in the base frame. The measured length is the
/// straight-line distance from `anchor` to the flange plus `length_offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CableEncoderModel {
    pub anchor: [f64; 3],
    pub length_offset: f64,
}

impl CableEncoderModel {
    pub fn new(anchor: [f64; 3], length_offset: f64) -> Result<Self> {
        ensure_finite("encoder anchor", &anchor)?;
        if !(length_offset >= 0.0 && length_offset.is_finite()) {
            return Err(CalibError::InvalidArgument(format!("length offset must be >= 0, got {length_offset}")));
        }
        Ok(Self { anchor, length_offset })
    }

    pub fn anchor_vector(&self) -> Vector3<f64> {
        Vector3::from(self.anchor)
    }
}

impl Default for CableEncoderModel {
    /// Encoder on the bench in front of the arm: 900 mm out, 150 mm to the
    /// side and 200 mm below the base origin.
    fn default() -> Self {
        Self { anchor: [900.0, 150.0, -200.0], length_offset: 50.0 }
    }
}

/// One joint configuration with its measured cable length (mm).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub joints: JointConfig,
    pub measured_length: f64,
}

impl Sample {
    pub fn new(joints: JointConfig, measured_length: f64) -> Result<Self> {
        ensure_finite("sample joints", joints.angles())?;
        if !(measured_length > 0.0 && measured_length.is_finite()) {
            return Err(CalibError::InvalidArgument(format!("measured length must be > 0, got {measured_length}")));
        }
        Ok(Self { joints, measured_length })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<Sample>,
    /// Seed used at generation; `None` for imported data.
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, seed: Option<u64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(CalibError::EmptyDataset);
        }
        Ok(Self { samples, seed })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Same joint configurations with replaced measured lengths.
    pub fn with_lengths(&self, lengths: &[f64]) -> Result<Self> {
        assert_eq!(lengths.len(), self.samples.len(), "length vector does not match dataset");
        let samples = self
            .samples
            .iter()
            .zip(lengths)
            .map(|(s, &l)| Sample::new(s.joints, l))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { samples, seed: self.seed })
    }

    /// Subset by sample indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.samples[i]).collect(), self.seed)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| CalibError::Io { path: path.to_owned(), source })?;
        Self::from_reader(file, path)
    }

    pub fn from_reader<R: std::io::Read>(reader: R, path: &Path) -> Result<Self> {
        let parse_err = |line: u64, message: String| CalibError::Parse { path: path.to_owned(), line, message };
        let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        let expected: Vec<String> = csv_header();
        if header.iter().collect::<Vec<_>>() != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(parse_err(1, format!("expected header `{}`", expected.join(","))));
        }
        let mut samples = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != JOINTS + 1 {
                return Err(parse_err(line, format!("expected {} columns, found {}", JOINTS + 1, record.len())));
            }
            let values = record
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| parse_err(line, format!("bad number `{f}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let joints = JointConfig::new(values[..JOINTS].try_into().unwrap()).map_err(|e| parse_err(line, e.to_string()))?;
            samples.push(Sample::new(joints, values[JOINTS]).map_err(|e| parse_err(line, e.to_string()))?);
        }
        Self::new(samples, None)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io_err = |source| CalibError::Io { path: path.to_owned(), source };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        out.write_all(self.to_csv_string().as_bytes()).map_err(io_err)?;
        out.flush().map_err(io_err)
    }

    /// CSV text; floats use the shortest representation that parses back
    /// to the same value.
    pub fn to_csv_string(&self) -> String {
        let mut out = csv_header().join(",");
        out.push('\n');
        for s in &self.samples {
            for a in s.joints.angles() {
                out.push_str(&format!("{a},"));
            }
            out.push_str(&format!("{}\n", s.measured_length));
        }
        out
    }
}

fn csv_header() -> Vec<String> {
    (1..=JOINTS).map(|i| format!("theta{i}")).chain(std::iter::once("measured_length".to_string())).collect()
}

/// Model-predicted cable length for a joint configuration.
pub fn nominal_cable_length(model: &CableEncoderModel, chain: &DhChain, joints: &JointConfig) -> f64 {
    (end_effector_position(chain, joints) - model.anchor_vector()).norm() + model.length_offset
}

/// Cable length and its gradient with respect to the 24 DH parameters:
/// the position Jacobian projected onto the unit vector anchor → flange.
pub fn cable_length_row(model: &CableEncoderModel, chain: &DhChain, joints: &JointConfig) -> (f64, SVector<f64, PARAMS>) {
    let delta = forward_kinematics(chain, joints).translation - model.anchor_vector();
    let dist = delta.norm();
    let jac = parameter_jacobian(chain, joints);
    let row = if dist > 0.0 { jac.matrix().transpose() * (delta / dist) } else { SVector::zeros() };
    (dist + model.length_offset, row)
}

/// `measured − predicted` for every sample.
pub fn residuals(model: &CableEncoderModel, chain: &DhChain, dataset: &Dataset) -> Vec<f64> {
    dataset.samples().iter().map(|s| s.measured_length - nominal_cable_length(model, chain, &s.joints)).collect()
}

/// Smooth length error that no DH parameter change reproduces, standing in
/// for cyclic transmission error of the shoulder, elbow and wrist joints:
/// `½ A (sin(3θ₂ + θ₃) + cos(2(θ₁ − θ₄)))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonGeometricError {
    /// Amplitude `A` (mm).
    pub amplitude: f64,
}

impl NonGeometricError {
    pub fn length_error(&self, joints: &JointConfig) -> f64 {
        let q = joints.angles();
        0.5 * self.amplitude * ((3.0 * q[1] + q[2]).sin() + (2.0 * (q[0] - q[3])).cos())
    }
}

/// Sampling workspace: per-joint uniform ranges (rad).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointRanges {
    pub lower: [f64; JOINTS],
    pub upper: [f64; JOINTS],
}

impl JointRanges {
    pub fn symmetric(half_width: f64) -> Self {
        Self { lower: [-half_width; JOINTS], upper: [half_width; JOINTS] }
    }

    fn validate(&self) -> Result<()> {
        ensure_finite("joint ranges", &[self.lower, self.upper].concat())?;
        if self.lower.iter().zip(&self.upper).any(|(l, u)| l > u) {
            return Err(CalibError::InvalidArgument("joint range lower bound exceeds upper bound".into()));
        }
        Ok(())
    }
}

impl Default for JointRanges {
    fn default() -> Self {
        Self::symmetric(std::f64::consts::FRAC_PI_4)
    }
}

/// Parameters of a synthetic measurement campaign.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub n: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub ranges: JointRanges,
    pub disturbance: Option<NonGeometricError>,
}

impl SimulationSpec {
    pub fn new(n: usize, noise_sigma: f64, seed: u64) -> Self {
        Self { n, noise_sigma, seed, ranges: JointRanges::default(), disturbance: None }
    }
}

/// Draws `spec.n` uniform joint configurations and measures them on the
/// true arm (`nominal + true_x`), adding i.i.d. Gaussian noise.
pub fn simulate_dataset(
    model: &CableEncoderModel,
    nominal: &DhChain,
    true_x: &KinematicErrorVector,
    spec: &SimulationSpec,
) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(CalibError::InvalidArgument("sample count must be >= 1".into()));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(CalibError::InvalidArgument(format!("noise sigma must be >= 0, got {}", spec.noise_sigma)));
    }
    spec.ranges.validate()?;
    let truth = apply_errors(nominal, true_x);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
    let mut samples = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let angles: [f64; JOINTS] = std::array::from_fn(|j| {
            let (lo, hi) = (spec.ranges.lower[j], spec.ranges.upper[j]);
            if hi > lo { rng.random_range(lo..hi) } else { lo }
        });
        let joints = JointConfig(angles);
        let mut length = nominal_cable_length(model, &truth, &joints);
        if let Some(dist) = &spec.disturbance {
            length += dist.length_error(&joints);
        }
        length += noise.sample(&mut rng);
        samples.push(Sample::new(joints, length)?);
    }
    Dataset::new(samples, Some(spec.seed))
}

/// Uniform random error vector: lengths within `±length_bound` mm, angles
/// within `±angle_bound` rad. `Δα₆` stays zero because a twist of the last
/// link does not move the flange origin and cannot be measured.
pub fn random_error_vector(length_bound: f64, angle_bound: f64, seed: u64) -> Result<KinematicErrorVector> {
    ensure_finite("error bounds", &[length_bound, angle_bound])?;
    if length_bound < 0.0 || angle_bound < 0.0 {
        return Err(CalibError::InvalidArgument("error bounds must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flat: [f64; PARAMS] = std::array::from_fn(|k| {
        let bound = if ParamGroup::of_index(k).is_length() { length_bound } else { angle_bound };
        let value = if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 };
        if k == PARAMS - 1 { 0.0 } else { value }
    });
    Ok(KinematicErrorVector::from_flat(&flat))
}

/// Rescales `x` so that the uncorrected nominal chain shows a noiseless
/// residual RMSE of `target_rmse` (to about 1e-12 relative) over 400 configurations drawn from
/// `ranges` with `seed`.
pub fn scale_to_rmse(
    model: &CableEncoderModel,
    nominal: &DhChain,
    x: &KinematicErrorVector,
    ranges: &JointRanges,
    target_rmse: f64,
    seed: u64,
) -> Result<KinematicErrorVector> {
    if !(target_rmse > 0.0 && target_rmse.is_finite()) {
        return Err(CalibError::InvalidArgument(format!("target RMSE must be > 0, got {target_rmse}")));
    }
    let spec = SimulationSpec { n: 400, noise_sigma: 0.0, seed, ranges: *ranges, disturbance: None };
    let probe_rmse = |x: &KinematicErrorVector| -> Result<f64> {
        let r = residuals(model, nominal, &simulate_dataset(model, nominal, x, &spec)?);
        Ok((r.iter().map(|e| e * e).sum::<f64>() / r.len() as f64).sqrt())
    };
    // The length change is nearly linear in the errors, so a few rescaling
    // rounds converge.
    let mut scale = 1.0;
    for _ in 0..50 {
        let rmse = probe_rmse(&x.scale(scale))?;
        if rmse == 0.0 {
            return Err(CalibError::InvalidArgument("error vector produces no length change to scale".into()));
        }
        if (rmse - target_rmse).abs() <= 1e-12 * target_rmse {
            break;
        }
        scale *= target_rmse / rmse;
    }
    Ok(x.scale(scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::DhLink;

    fn sample_dataset(n: usize, sigma: f64, seed: u64) -> Dataset {
        simulate_dataset(&CableEncoderModel::default(), &DhChain::default_arm(), &KinematicErrorVector::zeros(), &SimulationSpec::new(n, sigma, seed))
            .unwrap()
    }

    #[test]
    fn three_four_five() {
        let mut links = [DhLink::zero(); JOINTS];
        links[0].a = 3.0;
        links[0].d = 4.0;
        let chain = DhChain::new(links).unwrap();
        let model = CableEncoderModel::new([0.0; 3], 0.0).unwrap();
        // EE at (3, 0, 4)
        assert!((nominal_cable_length(&model, &chain, &JointConfig::zeros()) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn anchor_at_flange_gives_offset() {
        let chain = DhChain::default_arm();
        let q = JointConfig([0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let p = end_effector_position(&chain, &q);
        let model = CableEncoderModel::new([p.x, p.y, p.z], 12.5).unwrap();
        assert!((nominal_cable_length(&model, &chain, &q) - 12.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_model_rejected() {
        assert!(CableEncoderModel::new([0.0; 3], -1.0).is_err());
        assert!(CableEncoderModel::new([f64::NAN, 0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn noiseless_unperturbed_residuals_vanish() {
        let d = sample_dataset(50, 0.0, 3);
        let r = residuals(&CableEncoderModel::default(), &DhChain::default_arm(), &d);
        assert!(r.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_sample_residual() {
        let model = CableEncoderModel::default();
        let chain = DhChain::default_arm();
        let q = JointConfig([0.3, -0.4, 0.2, 0.0, 0.1, -0.2]);
        let l = nominal_cable_length(&model, &chain, &q) + 2.5;
        let d = Dataset::new(vec![Sample::new(q, l).unwrap()], None).unwrap();
        let r = residuals(&model, &chain, &d);
        assert!((r[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_dataset() {
        assert_eq!(sample_dataset(20, 0.1, 9), sample_dataset(20, 0.1, 9));
        assert_ne!(sample_dataset(20, 0.1, 9), sample_dataset(20, 0.1, 10));
    }

    #[test]
    fn noise_spread_matches_sigma() {
        let d = sample_dataset(1000, 0.1, 42);
        let r = residuals(&CableEncoderModel::default(), &DhChain::default_arm(), &d);
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64).sqrt();
        assert!((0.08..=0.12).contains(&sd), "sd = {sd}");
    }

    #[test]
    fn zero_samples_rejected() {
        let spec = SimulationSpec::new(0, 0.1, 1);
        let err = simulate_dataset(&CableEncoderModel::default(), &DhChain::default_arm(), &KinematicErrorVector::zeros(), &spec);
        assert!(matches!(err, Err(CalibError::InvalidArgument(_))));
    }

    #[test]
    fn csv_round_trip() {
        let d = sample_dataset(30, 0.1, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        d.write_csv(&path).unwrap();
        let back = Dataset::read_csv(&path).unwrap();
        assert_eq!(back.samples(), d.samples());
        assert_eq!(back.seed, None);
    }

    #[test]
    fn csv_wrong_column_count_names_line() {
        let text = "theta1,theta2,theta3,theta4,theta5,theta6,measured_length\n0,0,0,0,0,0,100\n0,0,0,0,100\n";
        let err = Dataset::from_reader(text.as_bytes(), Path::new("x.csv")).unwrap_err();
        match err {
            CalibError::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("columns"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_header_only_is_empty() {
        let text = "theta1,theta2,theta3,theta4,theta5,theta6,measured_length\n";
        assert!(matches!(Dataset::from_reader(text.as_bytes(), Path::new("x.csv")), Err(CalibError::EmptyDataset)));
    }

    #[test]
    fn cable_row_matches_finite_difference() {
        let model = CableEncoderModel::default();
        let chain = DhChain::default_arm();
        let q = JointConfig([0.5, -0.3, 0.8, -1.1, 0.6, 0.2]);
        let (_, row) = cable_length_row(&model, &chain, &q);
        for k in 0..PARAMS {
            let mut e = [0.0; PARAMS];
            e[k] = 1e-6;
            let plus = nominal_cable_length(&model, &apply_errors(&chain, &KinematicErrorVector::from_flat(&e)), &q);
            e[k] = -1e-6;
            let minus = nominal_cable_length(&model, &apply_errors(&chain, &KinematicErrorVector::from_flat(&e)), &q);
            let fd = (plus - minus) / 2e-6;
            assert!((fd - row[k]).abs() <= 1e-5 * fd.abs().max(1.0), "k={k}: {fd} vs {}", row[k]);
        }
    }
}
