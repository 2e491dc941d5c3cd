use std::path::{Path, PathBuf};

use armcal::ensemble::{aggregation_curve, curve_csv};
use armcal::evaluate::{compare_table, compute_metrics, split_dataset, Calibrator, FittedModel, MetricTriple, Split, TRAIN_FRACTION};
use armcal::identify::{IdentifierConfigs, Method, Problem};
use armcal::measurement::{
    random_error_vector, residuals, scale_to_rmse, simulate_dataset, Dataset, JointRanges, NonGeometricError, SimulationSpec,
};
use serde::Serialize;

use crate::config::Loaded;
use crate::{CalibrateArgs, CompareArgs, CurveArgs, DataArgs, EvaluateArgs, MethodChoice, Part, SimulateArgs, TableSplit};

type CmdResult = Result<(), String>;

fn write_artifact(path: &Path, contents: &str) -> CmdResult {
    std::fs::write(path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn or_default(flag: &Option<PathBuf>, fallback: &Path) -> PathBuf {
    flag.clone().unwrap_or_else(|| fallback.to_path_buf())
}

struct Prepared {
    data: Dataset,
    split_seed: u64,
    identifier_seed: u64,
    configs: IdentifierConfigs,
}

fn prepare(l: &Loaded, d: &DataArgs) -> Result<Prepared, String> {
    let path = or_default(&d.data, &l.config.outputs.dataset);
    let data = Dataset::read_csv(&path).map_err(|e| e.to_string())?;
    let identifier_seed = d.seed.unwrap_or(l.config.seeds.identifiers);
    Ok(Prepared {
        data,
        split_seed: d.split_seed.unwrap_or(l.config.seeds.split),
        identifier_seed,
        configs: l.config.identifier_configs(identifier_seed),
    })
}

impl Prepared {
    fn split(&self) -> Result<(Dataset, Dataset), String> {
        split_dataset(&self.data, TRAIN_FRACTION, self.split_seed).map_err(|e| e.to_string())
    }
}

fn fmt_metrics(m: &MetricTriple) -> String {
    format!("RMSE {:.3} mm, Std {:.3} mm, Max {:.3} mm", m.rmse, m.std, m.max)
}

pub fn simulate(l: &Loaded, a: &SimulateArgs) -> CmdResult {
    let (c, sim) = (&l.config, &l.config.simulation);
    let truth_seed = a.truth_seed.unwrap_or(c.seeds.truth);
    let target = a.target_rmse.unwrap_or(sim.target_rmse);
    let disturbance = a.disturbance.unwrap_or(sim.disturbance);
    let ranges = JointRanges::symmetric(sim.joint_range);

    let mut truth = random_error_vector(sim.error_bounds[0], sim.error_bounds[1], truth_seed).map_err(|e| e.to_string())?;
    if target > 0.0 {
        truth = scale_to_rmse(&c.encoder, &l.robot, &truth, &ranges, target, truth_seed).map_err(|e| e.to_string())?;
    }
    let spec = SimulationSpec {
        n: a.n.unwrap_or(sim.n),
        noise_sigma: a.sigma.unwrap_or(sim.sigma),
        seed: a.seed.unwrap_or(c.seeds.data),
        ranges,
        disturbance: (disturbance > 0.0).then_some(NonGeometricError { amplitude: disturbance }),
    };
    let data = simulate_dataset(&c.encoder, &l.robot, &truth, &spec).map_err(|e| e.to_string())?;
    let out = or_default(&a.out, &c.outputs.dataset);
    write_artifact(&out, &data.to_csv_string())?;
    if let Some(path) = &a.truth_out {
        write_artifact(path, &serde_json::to_string_pretty(&truth).map_err(|e| e.to_string())?)?;
    }
    let before = compute_metrics(&residuals(&c.encoder, &l.robot, &data)).map_err(|e| e.to_string())?;
    println!("wrote {} samples to {} (uncalibrated {})", data.len(), out.display(), fmt_metrics(&before));
    Ok(())
}

fn ensemble_settings(l: &Loaded, order: &Option<Vec<Method>>, shrinkage: Option<f64>) -> (Vec<Method>, f64) {
    (order.clone().unwrap_or_else(|| l.config.ensemble.order.clone()), shrinkage.unwrap_or(l.config.ensemble.shrinkage))
}

fn calibrator(l: &Loaded, choice: &MethodChoice, order: &Option<Vec<Method>>, shrinkage: Option<f64>) -> Calibrator {
    match choice {
        MethodChoice::Base(m) => Calibrator::Base(*m),
        MethodChoice::Ensemble => {
            let (order, shrinkage) = ensemble_settings(l, order, shrinkage);
            Calibrator::Ensemble { order, shrinkage }
        }
    }
}

pub fn calibrate(l: &Loaded, a: &CalibrateArgs) -> CmdResult {
    let p = prepare(l, &a.data)?;
    let fit_data = if a.holdout { p.split()?.0 } else { p.data.clone() };
    let problem = Problem::new(&l.config.encoder, &l.robot, &fit_data);
    let calibrator = calibrator(l, &a.method, &a.order, a.shrinkage);
    let fitted = calibrator.fit(&problem, &p.configs).map_err(|e| e.to_string())?;

    let out = or_default(&a.out, &l.config.outputs.model);
    write_artifact(&out, &fitted.to_json().map_err(|e| e.to_string())?)?;
    let before = compute_metrics(&residuals(&l.config.encoder, &l.robot, &fit_data)).map_err(|e| e.to_string())?;
    let after = compute_metrics(&fitted.corrected_residuals(&l.config.encoder, &l.robot, &fit_data)).map_err(|e| e.to_string())?;
    println!(
        "{}: training RMSE {:.3} -> {:.3} mm on {} samples; model written to {}",
        calibrator.name(),
        before.rmse,
        after.rmse,
        fit_data.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Evaluation {
    part: &'static str,
    n: usize,
    before: MetricTriple,
    after: MetricTriple,
}

pub fn evaluate(l: &Loaded, a: &EvaluateArgs) -> CmdResult {
    let p = prepare(l, &a.data)?;
    let model_path = or_default(&a.model, &l.config.outputs.model);
    let text = std::fs::read_to_string(&model_path).map_err(|e| format!("cannot read {}: {e}", model_path.display()))?;
    let fitted = FittedModel::from_json(&text).map_err(|e| format!("{}: {e}", model_path.display()))?;
    let (part, data) = match a.part {
        Part::All => ("all", p.data.clone()),
        Part::Train => ("train", p.split()?.0),
        Part::Test => ("test", p.split()?.1),
    };
    let (model, robot) = (&l.config.encoder, &l.robot);
    let evaluation = Evaluation {
        part,
        n: data.len(),
        before: compute_metrics(&residuals(model, robot, &data)).map_err(|e| e.to_string())?,
        after: compute_metrics(&fitted.corrected_residuals(model, robot, &data)).map_err(|e| e.to_string())?,
    };
    let out = or_default(&a.out, &l.config.outputs.metrics);
    write_artifact(&out, &serde_json::to_string_pretty(&evaluation).map_err(|e| e.to_string())?)?;
    println!("{part} ({} samples)\n  before: {}\n  after:  {}", evaluation.n, fmt_metrics(&evaluation.before), fmt_metrics(&evaluation.after));
    Ok(())
}

pub fn compare(l: &Loaded, a: &CompareArgs) -> CmdResult {
    let p = prepare(l, &a.data)?;
    let (train, test) = p.split()?;
    let methods: Vec<Calibrator> = match &a.methods {
        Some(choices) => choices.iter().map(|c| calibrator(l, c, &None, None)).collect(),
        None => Method::ALL.iter().map(|&m| Calibrator::Base(m)).chain(std::iter::once(calibrator(l, &MethodChoice::Ensemble, &None, None))).collect(),
    };
    let report = compare_table(&methods, &train, &test, &l.config.encoder, &l.robot, &p.configs, vec![p.split_seed, p.identifier_seed])
        .map_err(|e| e.to_string())?;

    let outputs = &l.config.outputs;
    let test_table = report.to_text(Split::Test);
    let train_table = report.to_text(Split::Train);
    write_artifact(&or_default(&a.out, &outputs.report), &serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?)?;
    write_artifact(&or_default(&a.table, &outputs.table), &format!("{test_table}\n{train_table}"))?;
    write_artifact(&or_default(&a.series, &outputs.series), &report.series_csv())?;
    print!("{}", if a.split == TableSplit::Test { test_table } else { train_table });
    Ok(())
}

pub fn curve(l: &Loaded, a: &CurveArgs) -> CmdResult {
    let p = prepare(l, &a.data)?;
    let (train, test) = p.split()?;
    let (order, shrinkage) = ensemble_settings(l, &a.order, a.shrinkage);
    let points = aggregation_curve(&train, &test, &l.config.encoder, &l.robot, &order, shrinkage, &p.configs).map_err(|e| e.to_string())?;
    write_artifact(&or_default(&a.out, &l.config.outputs.curve), &curve_csv(&points, &order))?;
    println!("{:<7} {:<6} {:>10} {:>10}", "stages", "added", "train RMSE", "test RMSE");
    for pt in &points {
        println!("{:<7} {:<6} {:>10.3} {:>10.3}", pt.stages, order[pt.stages - 1], pt.train.rmse, pt.test.rmse);
    }
    Ok(())
}
