//! `armcal`: simulate cable-encoder campaigns, calibrate arms and compare
//! identifiers from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use armcal::identify::Method;
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "armcal", version, about = "Kinematic calibration of 6-axis arms from cable-length measurements")]
struct Cli {
    /// Run configuration (TOML). Without one, built-in defaults are used.
    #[arg(long, short, global = true, env = "ARMCAL_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a randomly perturbed arm.
    Simulate(SimulateArgs),
    /// Fit one identifier or the ensemble and write the fitted model.
    Calibrate(CalibrateArgs),
    /// Accuracy of a fitted model on a dataset.
    Evaluate(EvaluateArgs),
    /// Fit every method on the training split and tabulate the accuracy.
    Compare(CompareArgs),
    /// Accuracy of the ensemble truncated after each stage.
    Curve(CurveArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Number of samples.
    #[arg(long)]
    pub n: Option<usize>,
    /// Measurement noise standard deviation (mm).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Seed of the joint draws and the noise.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed of the true error vector.
    #[arg(long)]
    pub truth_seed: Option<u64>,
    /// Amplitude of the non-geometric length error (mm).
    #[arg(long)]
    pub disturbance: Option<f64>,
    /// Pre-calibration RMSE the true errors are scaled to (mm); 0 disables scaling.
    #[arg(long)]
    pub target_rmse: Option<f64>,
    /// Dataset CSV to write.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// JSON file receiving the true error vector.
    #[arg(long)]
    pub truth_out: Option<PathBuf>,
}

/// Dataset and split options shared by the fitting commands.
#[derive(Args)]
pub struct DataArgs {
    /// Dataset CSV (default: `outputs.dataset` of the configuration).
    #[arg(long, short)]
    pub data: Option<PathBuf>,
    /// Seed of the 80/20 train/test partition.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Base seed of the stochastic identifiers.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// `ensemble` or one of the eight identifiers.
#[derive(Clone, Debug, PartialEq)]
pub enum MethodChoice {
    Base(Method),
    Ensemble,
}

fn parse_method_choice(s: &str) -> Result<MethodChoice, String> {
    if s.eq_ignore_ascii_case("ensemble") {
        return Ok(MethodChoice::Ensemble);
    }
    s.parse::<Method>().map(MethodChoice::Base).map_err(|_| {
        let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).chain(["ensemble"]).collect();
        format!("unknown method `{s}`; valid names: {}", names.join(", "))
    })
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

#[derive(Args)]
pub struct CalibrateArgs {
    /// Identifier name or `ensemble`.
    #[arg(long, short, value_parser = parse_method_choice)]
    pub method: MethodChoice,
    #[command(flatten)]
    pub data: DataArgs,
    /// Fit only the training part of the split instead of the whole dataset.
    #[arg(long)]
    pub holdout: bool,
    /// Ensemble stage order, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub order: Option<Vec<Method>>,
    /// Ensemble shrinkage in (0, 1].
    #[arg(long)]
    pub shrinkage: Option<f64>,
    /// Fitted model JSON to write.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Part {
    All,
    Train,
    Test,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Fitted model JSON written by `calibrate`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Which samples to score.
    #[arg(long, value_enum, default_value_t = Part::All)]
    pub part: Part,
    /// Metrics JSON to write.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TableSplit {
    Train,
    Test,
}

#[derive(Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Methods to compare, comma separated (default: all eight and the ensemble).
    #[arg(long, value_delimiter = ',', value_parser = parse_method_choice)]
    pub methods: Option<Vec<MethodChoice>>,
    /// Split shown in the printed table.
    #[arg(long, value_enum, default_value_t = TableSplit::Test)]
    pub split: TableSplit,
    /// Report JSON to write.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Text table to write.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Per-sample test residual CSV to write.
    #[arg(long)]
    pub series: Option<PathBuf>,
}

#[derive(Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Ensemble stage order, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub order: Option<Vec<Method>>,
    /// Ensemble shrinkage in (0, 1].
    #[arg(long)]
    pub shrinkage: Option<f64>,
    /// Curve CSV to write.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let loaded = match RunConfig::load(cli.config.as_deref()) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(&loaded, a),
        Command::Calibrate(a) => commands::calibrate(&loaded, a),
        Command::Evaluate(a) => commands::evaluate(&loaded, a),
        Command::Compare(a) => commands::compare(&loaded, a),
        Command::Curve(a) => commands::curve(&loaded, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
