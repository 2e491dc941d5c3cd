//! Boosted ensemble of the base identifiers.
//!
//! Stages are fitted one after another on the residuals left by the stages
//! before them (squared-loss gradient boosting). A geometric stage is fitted
//! by running its identifier on a pseudo-dataset whose measured lengths are
//! `nominal length + current residual`; it then predicts the length change
//! of its corrected chain. A stage that would raise the training RMSE is
//! kept with weight 0.

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::evaluate::{compute_metrics, MetricTriple};
use crate::identify::{identify, mean_square, IdentificationResult, IdentifierConfigs, Method, Problem};
use crate::kinematics::{DhChain, JointConfig};
use crate::measurement::{nominal_cable_length, residuals, CableEncoderModel, Dataset};

/// Version tag written into serialized ensembles.
pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStage {
    pub method: Method,
    pub result: IdentificationResult,
    /// 1 when the stage lowered the training RMSE, 0 otherwise.
    pub weight: f64,
    /// Training RMSE before and after this stage (mm).
    pub train_rmse_before: f64,
    pub train_rmse_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub version: u32,
    pub stages: Vec<EnsembleStage>,
    pub shrinkage: f64,
    pub base_order: Vec<Method>,
}

impl EnsembleModel {
    pub fn stage_weights(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.weight).collect()
    }

    /// The first `k` stages as an ensemble of their own.
    pub fn truncated(&self, k: usize) -> EnsembleModel {
        EnsembleModel {
            version: self.version,
            stages: self.stages[..k.min(self.stages.len())].to_vec(),
            shrinkage: self.shrinkage,
            base_order: self.base_order[..k.min(self.base_order.len())].to_vec(),
        }
    }

    pub fn corrected_residuals(&self, model: &CableEncoderModel, nominal: &DhChain, dataset: &Dataset) -> Vec<f64> {
        dataset
            .samples()
            .iter()
            .map(|s| s.measured_length - nominal_cable_length(model, nominal, &s.joints) - ensemble_predict(self, model, nominal, &s.joints))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let e: EnsembleModel = serde_json::from_str(text)?;
        if e.version != ENSEMBLE_FORMAT_VERSION {
            return Err(CalibError::InvalidArgument(format!(
                "unsupported ensemble format version {} (expected {ENSEMBLE_FORMAT_VERSION})",
                e.version
            )));
        }
        Ok(e)
    }
}

/// Predicted length correction relative to the nominal chain:
/// `Σₘ weightₘ · shrinkage · predictionₘ(joints)`.
pub fn ensemble_predict(e: &EnsembleModel, model: &CableEncoderModel, nominal: &DhChain, joints: &JointConfig) -> f64 {
    e.stages
        .iter()
        .filter(|s| s.weight != 0.0)
        .map(|s| s.weight * e.shrinkage * s.result.predict_residual(model, nominal, joints))
        .sum()
}

/// Stage-wise residual fitting of `base_order` on `train`.
pub fn boost_fit(
    model: &CableEncoderModel,
    nominal: &DhChain,
    train: &Dataset,
    base_order: &[Method],
    shrinkage: f64,
    configs: &IdentifierConfigs,
) -> Result<EnsembleModel> {
    if base_order.is_empty() {
        return Err(CalibError::InvalidArgument("ensemble needs at least one stage".into()));
    }
    if !(shrinkage > 0.0 && shrinkage <= 1.0) {
        return Err(CalibError::InvalidArgument(format!("shrinkage must lie in (0, 1], got {shrinkage}")));
    }
    let nominal_lengths: Vec<f64> = train.samples().iter().map(|s| nominal_cable_length(model, nominal, &s.joints)).collect();
    let mut current = residuals(model, nominal, train);
    let mut stages = Vec::with_capacity(base_order.len());

    for (index, &method) in base_order.iter().enumerate() {
        let stage_err = |source: CalibError| CalibError::Stage { stage: index + 1, method: method.to_string(), source: Box::new(source) };
        let targets: Vec<f64> = nominal_lengths.iter().zip(&current).map(|(l, r)| l + r).collect();
        let pseudo = train.with_lengths(&targets).map_err(stage_err)?;
        let result = identify(method, &Problem::new(model, nominal, &pseudo), configs).map_err(stage_err)?;

        let before = mean_square(&current);
        let updated: Vec<f64> = train
            .samples()
            .iter()
            .zip(&current)
            .map(|(s, r)| r - shrinkage * result.predict_residual(model, nominal, &s.joints))
            .collect();
        let after = mean_square(&updated);
        let weight = if after <= before {
            current = updated;
            1.0
        } else {
            0.0
        };
        stages.push(EnsembleStage {
            method,
            result,
            weight,
            train_rmse_before: before.sqrt(),
            train_rmse_after: mean_square(&current).sqrt(),
        });
    }
    Ok(EnsembleModel { version: ENSEMBLE_FORMAT_VERSION, stages, shrinkage, base_order: base_order.to_vec() })
}

/// One row of the aggregation curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub stages: usize,
    pub train: MetricTriple,
    pub test: MetricTriple,
}

/// Metrics of the ensemble truncated to its first `k` stages, for every `k`.
pub fn aggregation_curve(
    train: &Dataset,
    test: &Dataset,
    model: &CableEncoderModel,
    nominal: &DhChain,
    base_order: &[Method],
    shrinkage: f64,
    configs: &IdentifierConfigs,
) -> Result<Vec<CurvePoint>> {
    let full = boost_fit(model, nominal, train, base_order, shrinkage, configs)?;
    curve_of(&full, train, test, model, nominal)
}

/// Aggregation curve of an already fitted ensemble.
pub fn curve_of(full: &EnsembleModel, train: &Dataset, test: &Dataset, model: &CableEncoderModel, nominal: &DhChain) -> Result<Vec<CurvePoint>> {
    (1..=full.stages.len())
        .map(|k| {
            let e = full.truncated(k);
            Ok(CurvePoint {
                stages: k,
                train: compute_metrics(&e.corrected_residuals(model, nominal, train))?,
                test: compute_metrics(&e.corrected_residuals(model, nominal, test))?,
            })
        })
        .collect()
}

/// CSV form of an aggregation curve.
pub fn curve_csv(curve: &[CurvePoint], order: &[Method]) -> String {
    let mut out = String::from("stages,method,train_rmse,train_std,train_max,test_rmse,test_std,test_max\n");
    for p in curve {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            p.stages,
            order[p.stages - 1],
            p.train.rmse,
            p.train.std,
            p.train.max,
            p.test.rmse,
            p.test.std,
            p.test.max
        ));
    }
    out
}
