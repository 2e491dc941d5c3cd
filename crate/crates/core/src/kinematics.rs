//! Denavit–Hartenberg forward kinematics and the parameter Jacobian.
//!
//! Each link contributes `Rot(z, θ) · Trans(z, d) · Trans(x, a) · Rot(x, α)`
//! where `θ` is the commanded joint angle plus the link's angle offset. The
//! kinematic error vector is always laid out as
//! `(Δa₁..Δa₆, Δd₁..Δd₆, Δθ₁..Δθ₆, Δα₁..Δα₆)`.

use std::fmt::Write as _;
use std::fs;
use std::ops::{Add, Mul, Neg};
use std::path::Path;

use nalgebra::{Matrix3, Matrix4, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, CalibError, Result};

/// Number of joints in the serial chain.
pub const JOINTS: usize = 6;
/// Length of the flattened kinematic error vector.
pub const PARAMS: usize = 4 * JOINTS;

/// Parameter groups of the error vector, in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    A,
    D,
    Theta,
    Alpha,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 4] = [ParamGroup::A, ParamGroup::D, ParamGroup::Theta, ParamGroup::Alpha];

    /// Group of flat parameter index `k`.
    pub fn of_index(k: usize) -> ParamGroup {
        Self::ALL[k / JOINTS]
    }

    /// Length groups are in mm, angle groups in rad.
    pub fn is_length(self) -> bool {
        matches!(self, ParamGroup::A | ParamGroup::D)
    }
}

/// One row of a DH table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DhLink {
    /// Link length (mm).
    pub a: f64,
    /// Link offset (mm).
    pub d: f64,
    /// Joint angle offset (rad), added to the commanded joint angle.
    pub theta_offset: f64,
    /// Link twist (rad).
    pub alpha: f64,
}

impl DhLink {
    pub fn new(a: f64, d: f64, theta_offset: f64, alpha: f64) -> Result<Self> {
        ensure_finite("DH link", &[a, d, theta_offset, alpha])?;
        Ok(Self { a, d, theta_offset, alpha })
    }

    pub const fn zero() -> Self {
        Self { a: 0.0, d: 0.0, theta_offset: 0.0, alpha: 0.0 }
    }

    fn is_finite(&self) -> bool {
        [self.a, self.d, self.theta_offset, self.alpha].iter().all(|v| v.is_finite())
    }
}

/// Nominal (or perturbed) DH table of a six-joint arm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DhChain {
    links: [DhLink; JOINTS],
}

impl DhChain {
    pub fn new(links: [DhLink; JOINTS]) -> Result<Self> {
        if !links.iter().all(DhLink::is_finite) {
            return Err(CalibError::InvalidArgument("DH chain contains a non-finite parameter".into()));
        }
        Ok(Self { links })
    }

    /// Builds a chain from a slice, which must hold exactly six links.
    pub fn from_slice(links: &[DhLink]) -> Result<Self> {
        let links: [DhLink; JOINTS] = links.try_into().map_err(|_| {
            CalibError::InvalidArgument(format!("DH chain needs exactly {JOINTS} links, got {}", links.len()))
        })?;
        Self::new(links)
    }

    pub fn zeros() -> Self {
        Self { links: [DhLink::zero(); JOINTS] }
    }

    /// Default nominal arm: a six-axis arm with perpendicular consecutive
    /// joint axes and an offset tool flange.
    pub fn default_arm() -> Self {
        use std::f64::consts::FRAC_PI_2;
        Self {
            links: [
                DhLink { a: 60.0, d: 330.0, theta_offset: 0.0, alpha: -FRAC_PI_2 },
                DhLink { a: 300.0, d: 40.0, theta_offset: -FRAC_PI_2, alpha: FRAC_PI_2 },
                DhLink { a: 30.0, d: 280.0, theta_offset: 0.0, alpha: -FRAC_PI_2 },
                DhLink { a: 20.0, d: 260.0, theta_offset: 0.0, alpha: FRAC_PI_2 },
                DhLink { a: 0.0, d: 30.0, theta_offset: 0.0, alpha: -FRAC_PI_2 },
                DhLink { a: 80.0, d: 120.0, theta_offset: 0.0, alpha: 0.0 },
            ],
        }
    }

    pub fn links(&self) -> &[DhLink; JOINTS] {
        &self.links
    }

    pub fn link(&self, i: usize) -> &DhLink {
        &self.links[i]
    }

    /// Reads a robot parameter file (see [`DhChain::to_param_string`]).
    pub fn read_param_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CalibError::Io { path: path.to_owned(), source })?;
        Self::parse_params(&text).map_err(|(line, message)| CalibError::Parse { path: path.to_owned(), line, message })
    }

    pub fn write_param_file(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_param_string()).map_err(|source| CalibError::Io { path: path.to_owned(), source })
    }

    /// Plain-text key/value form: one `linkN = a d theta_offset alpha` row
    /// per joint, `#` comments allowed anywhere.
    pub fn to_param_string(&self) -> String {
        let mut out = String::from(
            "# armcal robot parameters (standard DH)\n# linkN = a[mm] d[mm] theta_offset[rad] alpha[rad]\n",
        );
        for (i, l) in self.links.iter().enumerate() {
            let _ = writeln!(out, "link{} = {} {} {} {}", i + 1, l.a, l.d, l.theta_offset, l.alpha);
        }
        out
    }

    /// Parses the key/value form; errors carry the 1-based line number.
    pub fn parse_params(text: &str) -> std::result::Result<Self, (u64, String)> {
        let mut rows: [Option<DhLink>; JOINTS] = [None; JOINTS];
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx as u64 + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| (line_no, format!("expected `linkN = a d theta_offset alpha`, got `{line}`")))?;
            let key = key.trim();
            let joint: usize = key
                .strip_prefix("link")
                .and_then(|n| n.parse().ok())
                .filter(|n| (1..=JOINTS).contains(n))
                .ok_or_else(|| (line_no, format!("unknown key `{key}` (expected link1..link{JOINTS})")))?;
            let values: Vec<f64> = value
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| (line_no, format!("bad number `{v}`: {e}"))))
                .collect::<std::result::Result<_, _>>()?;
            if values.len() != 4 {
                return Err((line_no, format!("expected 4 values, found {}", values.len())));
            }
            let link = DhLink::new(values[0], values[1], values[2], values[3]).map_err(|e| (line_no, e.to_string()))?;
            if rows[joint - 1].replace(link).is_some() {
                return Err((line_no, format!("duplicate key `{key}`")));
            }
        }
        let last = text.lines().count() as u64;
        let mut links = [DhLink::zero(); JOINTS];
        for (i, row) in rows.iter().enumerate() {
            links[i] = row.ok_or_else(|| (last, format!("missing key `link{}`", i + 1)))?;
        }
        Ok(Self { links })
    }
}

/// Commanded joint angles (rad).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointConfig(pub [f64; JOINTS]);

impl JointConfig {
    pub fn new(angles: [f64; JOINTS]) -> Result<Self> {
        ensure_finite("joint configuration", &angles)?;
        Ok(Self(angles))
    }

    pub fn zeros() -> Self {
        Self([0.0; JOINTS])
    }

    pub fn angles(&self) -> &[f64; JOINTS] {
        &self.0
    }
}

/// Rigid transform with an orthonormal rotation block and a translation in mm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomogeneousTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl HomogeneousTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn position(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

impl Mul for HomogeneousTransform {
    type Output = HomogeneousTransform;

    fn mul(self, rhs: Self) -> Self {
        Self { rotation: self.rotation * rhs.rotation, translation: self.rotation * rhs.translation + self.translation }
    }
}

/// Per-joint geometric errors `(Δa, Δd, Δθ, Δα)`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct KinematicErrorVector {
    pub delta_a: [f64; JOINTS],
    pub delta_d: [f64; JOINTS],
    pub delta_theta: [f64; JOINTS],
    pub delta_alpha: [f64; JOINTS],
}

impl KinematicErrorVector {
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn to_flat(&self) -> [f64; PARAMS] {
        let mut out = [0.0; PARAMS];
        for (g, group) in [&self.delta_a, &self.delta_d, &self.delta_theta, &self.delta_alpha].into_iter().enumerate() {
            out[g * JOINTS..(g + 1) * JOINTS].copy_from_slice(group);
        }
        out
    }

    pub fn from_flat(flat: &[f64; PARAMS]) -> Self {
        let group = |g: usize| -> [f64; JOINTS] { flat[g * JOINTS..(g + 1) * JOINTS].try_into().unwrap() };
        Self { delta_a: group(0), delta_d: group(1), delta_theta: group(2), delta_alpha: group(3) }
    }

    pub fn to_vector(&self) -> SVector<f64, PARAMS> {
        SVector::from_column_slice(&self.to_flat())
    }

    pub fn from_vector(v: &SVector<f64, PARAMS>) -> Self {
        let mut flat = [0.0; PARAMS];
        flat.copy_from_slice(v.as_slice());
        Self::from_flat(&flat)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_flat(&self.to_flat().map(|v| v * s))
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

impl Add for KinematicErrorVector {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        let (a, b) = (self.to_flat(), rhs.to_flat());
        Self::from_flat(&std::array::from_fn(|k| a[k] + b[k]))
    }
}

impl Neg for KinematicErrorVector {
    type Output = Self;

    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

/// ∂(x, y, z)/∂X, columns in error-vector order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParameterJacobian(pub SMatrix<f64, 3, PARAMS>);

impl ParameterJacobian {
    pub fn matrix(&self) -> &SMatrix<f64, 3, PARAMS> {
        &self.0
    }

    pub fn column(&self, k: usize) -> Vector3<f64> {
        self.0.column(k).into_owned()
    }
}

fn rot_z(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn rot_x(alpha: f64) -> Matrix3<f64> {
    let (s, c) = alpha.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn d_rot_z(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

fn d_rot_x(alpha: f64) -> Matrix3<f64> {
    let (s, c) = alpha.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

/// Transform of a single link at the given commanded joint angle.
pub fn link_transform(link: &DhLink, joint_angle: f64) -> Result<HomogeneousTransform> {
    ensure_finite("link transform input", &[link.a, link.d, link.theta_offset, link.alpha, joint_angle])?;
    Ok(link_transform_unchecked(link, joint_angle))
}

fn link_transform_unchecked(link: &DhLink, joint_angle: f64) -> HomogeneousTransform {
    let theta = joint_angle + link.theta_offset;
    let (s, c) = theta.sin_cos();
    HomogeneousTransform {
        rotation: rot_z(theta) * rot_x(link.alpha),
        translation: Vector3::new(link.a * c, link.a * s, link.d),
    }
}

fn link_transforms(chain: &DhChain, joints: &JointConfig) -> [HomogeneousTransform; JOINTS] {
    std::array::from_fn(|i| link_transform_unchecked(&chain.links[i], joints.0[i]))
}

/// Base-to-flange transform, the ordered product of the six link transforms.
pub fn forward_kinematics(chain: &DhChain, joints: &JointConfig) -> HomogeneousTransform {
    link_transforms(chain, joints).into_iter().fold(HomogeneousTransform::identity(), |acc, t| acc * t)
}

/// End-effector position (mm).
pub fn end_effector_position(chain: &DhChain, joints: &JointConfig) -> Vector3<f64> {
    forward_kinematics(chain, joints).translation
}

/// Analytic Jacobian of the end-effector position with respect to the 24
/// DH parameters.
///
/// With prefix `T₀,ᵢ₋₁ = (R, t)` and the flange position `s` expressed in
/// frame `i`, the position is `t + R (Rᵢ s + tᵢ)`, so each column is
/// `R (∂Rᵢ s + ∂tᵢ)` for the matching link parameter.
pub fn parameter_jacobian(chain: &DhChain, joints: &JointConfig) -> ParameterJacobian {
    let links = link_transforms(chain, joints);

    let mut prefixes = [HomogeneousTransform::identity(); JOINTS];
    for i in 1..JOINTS {
        prefixes[i] = prefixes[i - 1] * links[i - 1];
    }
    // suffix[i] = flange position expressed in frame i (after link i).
    let mut suffix = [Vector3::zeros(); JOINTS];
    for i in (0..JOINTS - 1).rev() {
        suffix[i] = links[i + 1].transform_point(&suffix[i + 1]);
    }

    let mut jac = SMatrix::<f64, 3, PARAMS>::zeros();
    for i in 0..JOINTS {
        let link = &chain.links[i];
        let theta = joints.0[i] + link.theta_offset;
        let (s, c) = theta.sin_cos();
        let r_prev = prefixes[i].rotation;
        let p = suffix[i];

        let d_a = Vector3::new(c, s, 0.0);
        let d_d = Vector3::new(0.0, 0.0, 1.0);
        let d_theta = d_rot_z(theta) * rot_x(link.alpha) * p + Vector3::new(-link.a * s, link.a * c, 0.0);
        let d_alpha = rot_z(theta) * d_rot_x(link.alpha) * p;

        jac.set_column(i, &(r_prev * d_a));
        jac.set_column(JOINTS + i, &(r_prev * d_d));
        jac.set_column(2 * JOINTS + i, &(r_prev * d_theta));
        jac.set_column(3 * JOINTS + i, &(r_prev * d_alpha));
    }
    ParameterJacobian(jac)
}

/// Adds the error vector to the chain's DH parameters, returning a new chain.
pub fn apply_errors(chain: &DhChain, x: &KinematicErrorVector) -> DhChain {
    let mut links = chain.links;
    for (i, l) in links.iter_mut().enumerate() {
        l.a += x.delta_a[i];
        l.d += x.delta_d[i];
        l.theta_offset += x.delta_theta[i];
        l.alpha += x.delta_alpha[i];
    }
    DhChain { links }
}
