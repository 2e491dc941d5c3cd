//! Accuracy metrics, the train/test protocol and method comparison reports.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{boost_fit, EnsembleModel, ENSEMBLE_FORMAT_VERSION};
use crate::error::{CalibError, Result};
use crate::identify::{identify, IdentificationResult, IdentifierConfigs, Method, Problem};
use crate::kinematics::DhChain;
use crate::measurement::{residuals, CableEncoderModel, Dataset};

/// RMSE, mean absolute error and maximum absolute error of a residual
/// vector, all in mm.
///
/// `std` keeps the conventional column name of calibration tables but
/// holds the mean absolute residual, not a standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub rmse: f64,
    pub std: f64,
    pub max: f64,
}

pub fn compute_metrics(residuals: &[f64]) -> Result<MetricTriple> {
    if residuals.is_empty() {
        return Err(CalibError::InvalidArgument("metrics need at least one residual".into()));
    }
    let n = residuals.len() as f64;
    let rmse = (residuals.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let std = residuals.iter().map(|e| e.abs()).sum::<f64>() / n;
    let max = residuals.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    Ok(MetricTriple { rmse, std, max })
}

/// Fraction of samples used for training.
pub const TRAIN_FRACTION: f64 = 0.8;

/// Seeded random partition: the first `⌊fraction·n⌋` permuted samples train,
/// the rest test.
pub fn split_dataset(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = dataset.len();
    if n < 5 {
        return Err(CalibError::InvalidArgument(format!("need at least 5 samples to split, got {n}")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CalibError::InvalidArgument(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let n_train = (train_fraction * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(CalibError::InvalidArgument("split leaves one side empty".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((dataset.select(&order[..n_train])?, dataset.select(&order[n_train..])?))
}

/// Something that can be fitted and compared: a base identifier or the
/// boosted ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Calibrator {
    Base(Method),
    Ensemble { order: Vec<Method>, shrinkage: f64 },
}

impl Calibrator {
    pub fn name(&self) -> String {
        match self {
            Calibrator::Base(m) => m.name().to_string(),
            Calibrator::Ensemble { .. } => "ensemble".to_string(),
        }
    }

    pub fn default_ensemble() -> Self {
        Calibrator::Ensemble { order: Method::ALL.to_vec(), shrinkage: 1.0 }
    }

    /// The eight base methods followed by the ensemble.
    pub fn all() -> Vec<Calibrator> {
        Method::ALL.iter().map(|&m| Calibrator::Base(m)).chain(std::iter::once(Self::default_ensemble())).collect()
    }

    pub fn fit(&self, problem: &Problem<'_>, configs: &IdentifierConfigs) -> Result<FittedModel> {
        match self {
            Calibrator::Base(m) => identify(*m, problem, configs).map(FittedModel::Single),
            Calibrator::Ensemble { order, shrinkage } => {
                boost_fit(problem.model, problem.nominal, problem.dataset, order, *shrinkage, configs).map(FittedModel::Ensemble)
            }
        }
    }
}

/// A fitted correction: one identifier's result or an ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedModel {
    Single(IdentificationResult),
    Ensemble(EnsembleModel),
}

impl FittedModel {
    /// Residuals left on `dataset` after applying the correction.
    pub fn corrected_residuals(&self, model: &CableEncoderModel, nominal: &DhChain, dataset: &Dataset) -> Vec<f64> {
        match self {
            FittedModel::Single(r) => r.corrected_residuals(model, nominal, dataset),
            FittedModel::Ensemble(e) => e.corrected_residuals(model, nominal, dataset),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a fitted model, rejecting ensembles of another format version.
    pub fn from_json(text: &str) -> Result<Self> {
        let fitted: FittedModel = serde_json::from_str(text)?;
        if let FittedModel::Ensemble(e) = &fitted {
            if e.version != ENSEMBLE_FORMAT_VERSION {
                return Err(CalibError::InvalidArgument(format!(
                    "unsupported ensemble format version {} (expected {ENSEMBLE_FORMAT_VERSION})",
                    e.version
                )));
            }
        }
        Ok(fitted)
    }
}

/// Train and test metrics of one method.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub train: MetricTriple,
    pub test: MetricTriple,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    /// Present when the method fitted successfully.
    pub metrics: Option<SplitMetrics>,
    /// Error message of a failed fit.
    pub error: Option<String>,
    /// Per-sample test residuals after calibration (mm).
    pub test_residuals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub n_train: usize,
    pub n_test: usize,
    pub seeds: Vec<u64>,
}

/// Calibration accuracy of every compared method plus the uncalibrated
/// `Before` row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub dataset: DatasetDescriptor,
    pub before: ReportRow,
    pub rows: Vec<ReportRow>,
}

fn split_metrics(train: &[f64], test: &[f64]) -> Result<SplitMetrics> {
    Ok(SplitMetrics { train: compute_metrics(train)?, test: compute_metrics(test)? })
}

/// Fits every method on `train` and evaluates it on both splits. Fits run
/// in parallel; a failing method is reported and the others continue.
pub fn compare_table(
    methods: &[Calibrator],
    train: &Dataset,
    test: &Dataset,
    model: &CableEncoderModel,
    nominal: &DhChain,
    configs: &IdentifierConfigs,
    seeds: Vec<u64>,
) -> Result<ComparisonReport> {
    let before_train = residuals(model, nominal, train);
    let before_test = residuals(model, nominal, test);
    let before = ReportRow {
        method: "before".into(),
        metrics: Some(split_metrics(&before_train, &before_test)?),
        error: None,
        test_residuals: before_test,
    };
    let problem = Problem::new(model, nominal, train);
    let rows = methods
        .par_iter()
        .map(|c| match c.fit(&problem, configs) {
            Ok(fitted) => {
                let tr = fitted.corrected_residuals(model, nominal, train);
                let te = fitted.corrected_residuals(model, nominal, test);
                Ok(ReportRow { method: c.name(), metrics: Some(split_metrics(&tr, &te)?), error: None, test_residuals: te })
            }
            Err(e) => Ok(ReportRow { method: c.name(), metrics: None, error: Some(e.to_string()), test_residuals: Vec::new() }),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport { dataset: DatasetDescriptor { n_train: train.len(), n_test: test.len(), seeds }, before, rows })
}

/// Which split a text table shows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl ComparisonReport {
    pub fn row(&self, method: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Aligned text table with RMSE/Std/Max columns in mm.
    pub fn to_text(&self, split: Split) -> String {
        let label = match split {
            Split::Train => "train",
            Split::Test => "test",
        };
        let mut out = format!(
            "Calibration accuracy on {label} data (n_train = {}, n_test = {})\n{:<10} {:>8} {:>8} {:>8}\n",
            self.dataset.n_train, self.dataset.n_test, "Method", "RMSE", "Std", "Max"
        );
        for row in std::iter::once(&self.before).chain(&self.rows) {
            match &row.metrics {
                Some(m) => {
                    let t = if split == Split::Train { m.train } else { m.test };
                    let _ = writeln!(out, "{:<10} {:>8.3} {:>8.3} {:>8.3}", row.method, t.rmse, t.std, t.max);
                }
                None => {
                    let _ = writeln!(out, "{:<10} failed: {}", row.method, row.error.as_deref().unwrap_or("unknown error"));
                }
            }
        }
        out
    }

    /// Per-sample test residuals, one column per method, for plotting.
    pub fn series_csv(&self) -> String {
        let cols: Vec<&ReportRow> = std::iter::once(&self.before).chain(self.rows.iter().filter(|r| r.metrics.is_some())).collect();
        let mut out = String::from("sample");
        for c in &cols {
            out.push(',');
            out.push_str(&c.method);
        }
        out.push('\n');
        for i in 0..self.dataset.n_test {
            let _ = write!(out, "{}", i + 1);
            for c in &cols {
                let _ = write!(out, ",{}", c.test_residuals[i]);
            }
            out.push('\n');
        }
        out
    }
}
