//! Run configuration: a TOML file whose every key is optional.

use std::fmt;
use std::path::{Path, PathBuf};

use armcal::identify::{IdentifierConfigs, Method};
use armcal::kinematics::DhChain;
use armcal::measurement::CableEncoderModel;
use serde::Deserialize;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Robot parameter file. Relative paths resolve against the directory
    /// of the configuration file. Without it the built-in arm is used.
    pub robot: Option<PathBuf>,
    pub encoder: CableEncoderModel,
    pub simulation: SimulationSection,
    pub seeds: Seeds,
    pub ensemble: EnsembleSection,
    /// Per-identifier blocks (`[identifiers.ekf]`, `[identifiers.pf]`, ...).
    /// Keys override the built-in values one by one, also inside nested
    /// blocks such as `[identifiers.epf.pf]`. Seeds are derived from
    /// `seeds.identifiers`.
    #[serde(deserialize_with = "identifiers_over_defaults")]
    pub identifiers: IdentifierConfigs,
    pub outputs: Outputs,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub n: usize,
    /// Measurement noise standard deviation (mm).
    pub sigma: f64,
    /// Bounds of the random true errors: `[length mm, angle rad]`.
    pub error_bounds: [f64; 2],
    /// Rescale the true errors to this pre-calibration RMSE (mm); 0 keeps
    /// them as drawn.
    pub target_rmse: f64,
    /// Amplitude of the non-geometric length error (mm); 0 disables it.
    /// The default stands in for the unmodeled joint-dependent error of a
    /// real arm.
    pub disturbance: f64,
    /// Joints are drawn uniformly from `±joint_range` rad.
    pub joint_range: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            n: 120,
            sigma: 0.1,
            error_bounds: [1.0, 0.005],
            target_rmse: 2.1,
            disturbance: 1.5,
            joint_range: std::f64::consts::FRAC_PI_4,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Joint draws and measurement noise of `simulate`.
    pub data: u64,
    /// True error vector of `simulate`.
    pub truth: u64,
    /// Train/test partition.
    pub split: u64,
    /// Base seed of every stochastic identifier.
    pub identifiers: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { data: 7, truth: 1, split: 1, identifiers: 1 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub order: Vec<Method>,
    pub shrinkage: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self { order: Method::ALL.to_vec(), shrinkage: 1.0 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub dataset: PathBuf,
    pub truth: PathBuf,
    pub model: PathBuf,
    pub metrics: PathBuf,
    pub report: PathBuf,
    pub table: PathBuf,
    pub series: PathBuf,
    pub curve: PathBuf,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            dataset: "dataset.csv".into(),
            truth: "truth.json".into(),
            model: "model.json".into(),
            metrics: "metrics.json".into(),
            report: "report.json".into(),
            table: "report.txt".into(),
            series: "series.csv".into(),
            curve: "curve.csv".into(),
        }
    }
}

fn merge_table(base: &mut toml::Table, over: &toml::Table, path: &str) -> Result<(), String> {
    for (key, value) in over {
        let name = format!("{path}.{key}");
        match (base.get_mut(key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_table(b, o, &name)?,
            (Some(slot), _) => *slot = value.clone(),
            (None, _) => return Err(format!("unknown key `{name}`")),
        }
    }
    Ok(())
}

fn identifiers_over_defaults<'de, D: serde::Deserializer<'de>>(d: D) -> Result<IdentifierConfigs, D::Error> {
    use serde::de::Error;
    let over = toml::Table::deserialize(d)?;
    let mut base = toml::Table::try_from(IdentifierConfigs::default()).map_err(D::Error::custom)?;
    merge_table(&mut base, &over, "identifiers").map_err(D::Error::custom)?;
    toml::Value::Table(base).try_into().map_err(D::Error::custom)
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Configuration plus the robot it names.
pub struct Loaded {
    pub config: RunConfig,
    pub robot: DhChain,
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(format!("invalid config {}: {e}", path.display())))
    }

    /// Reads `path`, or returns the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Loaded, ConfigError> {
        let Some(path) = path else {
            return Ok(Loaded { config: RunConfig::default(), robot: DhChain::default_arm() });
        };
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let config = Self::parse(&text, path)?;
        CableEncoderModel::new(config.encoder.anchor, config.encoder.length_offset)
            .map_err(|e| ConfigError(format!("config {}: encoder: {e}", path.display())))?;
        let robot = match &config.robot {
            Some(file) => {
                let file = path.parent().map_or_else(|| file.clone(), |dir| dir.join(file));
                DhChain::read_param_file(&file).map_err(|e| ConfigError(format!("config {}: {e}", path.display())))?
            }
            None => DhChain::default_arm(),
        };
        Ok(Loaded { config, robot })
    }

    pub fn identifier_configs(&self, seed: u64) -> IdentifierConfigs {
        self.identifiers.clone().with_seed(seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::parse("", Path::new("x.toml")).unwrap();
        assert_eq!(c.simulation.n, 120);
        assert_eq!(c.ensemble.order, Method::ALL.to_vec());
        assert_eq!(c.identifiers, IdentifierConfigs::default());
    }

    #[test]
    fn nested_identifier_blocks_override_single_keys() {
        let c = RunConfig::parse("[identifiers.pf]\nn_particles = 50\n[identifiers.lmga.lm]\nlambda = 0.5\n", Path::new("x.toml")).unwrap();
        assert_eq!(c.identifiers.pf.n_particles, 50);
        assert_eq!(c.identifiers.pf.iterations, armcal::identify::PfConfig::default().iterations);
        assert_eq!(c.identifiers.lmga.lm.lambda, 0.5);
    }

    #[test]
    fn partial_nested_block_keeps_its_own_defaults() {
        let c = RunConfig::parse("[identifiers.epf.pf]\nn_particles = 10\n", Path::new("x.toml")).unwrap();
        assert_eq!(c.identifiers.epf.pf.n_particles, 10);
        assert_eq!(c.identifiers.epf.pf.iterations, armcal::identify::EpfConfig::default().pf.iterations);
    }

    #[test]
    fn unknown_identifier_keys_are_rejected() {
        let err = RunConfig::parse("[identifiers.lm]\nlamda = 0.1\n", Path::new("x.toml")).unwrap_err().to_string();
        assert!(err.contains("identifiers.lm.lamda"), "{err}");
    }

    #[test]
    fn shipped_config_matches_defaults() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/armcal.toml");
        let loaded = RunConfig::load(Some(&path)).unwrap();
        assert_eq!(loaded.robot, DhChain::default_arm());
        assert_eq!(loaded.config.identifiers, IdentifierConfigs::default());
        assert_eq!(loaded.config.encoder, CableEncoderModel::default());
        assert_eq!(loaded.config.simulation.n, SimulationSection::default().n);
        assert_eq!(loaded.config.simulation.disturbance, SimulationSection::default().disturbance);
    }

    #[test]
    fn parse_errors_name_file_and_line() {
        let err = RunConfig::parse("[seeds]\ndata = \"seven\"\n", Path::new("run.toml")).unwrap_err().to_string();
        assert!(err.contains("run.toml") && err.contains("line 2"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("[simulation]\nsamples = 3\n", Path::new("x.toml")).is_err());
    }
}
