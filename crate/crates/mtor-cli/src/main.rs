//! Command-line front-end: synthetic data generation, training, evaluation,
//! and cross-validated λ selection over CSV datasets and JSON artifacts.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod manifest;
mod model_file;

use mtor::baselines::StlSetting;
use mtor::model::ThresholdVariant;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Inconsistent or invalid flags. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Unreadable, unparseable, or incompatible data. Exit code 3.
    #[error("{0}")]
    Data(String),
    /// Training diverged or produced non-finite values. Exit code 4.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "mtor",
    version,
    about = "Multi-task ordinal regression: generate, train, eval, cv"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic multi-task ordinal dataset and its ground truth
    Generate(GenerateArgs),
    /// Train a model and persist it as JSON
    Train(TrainArgs),
    /// Evaluate a persisted model on a dataset
    Eval(EvalArgs),
    /// Select the sparsity parameter by k-fold cross-validation
    Cv(CvArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    /// Finite first/last thresholds enter the loss
    Immediate,
    /// Every interior threshold enters the loss
    All,
}

impl From<VariantArg> for ThresholdVariant {
    fn from(value: VariantArg) -> Self {
        match value {
            VariantArg::Immediate => ThresholdVariant::Immediate,
            VariantArg::All => ThresholdVariant::All,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    /// Regularized multi-task model (FISTA + threshold descent)
    Rmtor,
    /// Deep multi-task model (shared layers + task heads)
    Dmtor,
    /// Single-task shallow baseline
    StlShallow,
    /// Single-task deep baseline
    StlDeep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SettingArg {
    /// Joint multi-task training (rmtor/dmtor only)
    Mtl,
    /// One pooled model served for every task (stl-* only)
    Global,
    /// One model per task (stl-* only)
    Individual,
}

impl SettingArg {
    fn stl_setting(self) -> Option<StlSetting> {
        match self {
            SettingArg::Mtl => None,
            SettingArg::Global => Some(StlSetting::Global),
            SettingArg::Individual => Some(StlSetting::Individual),
        }
    }
}

#[derive(Args, Clone)]
pub struct CsvArgs {
    /// Column holding the ordinal label
    #[arg(long, default_value = "label")]
    label_column: String,
    /// Column holding the task (group) key
    #[arg(long, default_value = "task")]
    task_column: String,
    /// Explicit feature columns; default is every remaining column
    #[arg(long, value_delimiter = ',')]
    feature_columns: Option<Vec<String>>,
    /// Append a constant-1 feature column (intercept)
    #[arg(long)]
    bias: bool,
    /// Single-character field delimiter
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// Override the number of classes U (default: max observed label)
    #[arg(long)]
    classes: Option<u32>,
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Number of tasks
    #[arg(long)]
    tasks: usize,
    /// Instances per task: one value for all tasks or a comma list
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// Shared feature dimension G
    #[arg(long)]
    features: usize,
    /// Number of ordinal classes U
    #[arg(long)]
    classes: u32,
    /// Task relatedness ρ in [0,1]
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Latent noise standard deviation
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Fraction of jointly zeroed weight rows
    #[arg(long, default_value_t = 0.0)]
    sparsity: f64,
    #[arg(long, env = "MTOR_SEED", default_value_t = 0)]
    seed: u64,
    /// Output CSV path
    #[arg(long, default_value = "synthetic.csv")]
    out: PathBuf,
    /// Ground-truth JSON path (default: <out>.truth.json)
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Omit the manifest so reruns produce byte-identical artifacts
    #[arg(long)]
    no_manifest: bool,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training dataset CSV
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    model: ModelKind,
    #[arg(long, value_enum, default_value_t = VariantArg::Immediate)]
    variant: VariantArg,
    #[arg(long, value_enum, default_value_t = SettingArg::Mtl)]
    setting: SettingArg,
    /// Sparsity parameter λ (shallow models)
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// FISTA iteration cap
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
    /// FISTA relative weight-change tolerance
    #[arg(long, default_value_t = 1e-6)]
    fista_tolerance: f64,
    /// FISTA starting curvature γ
    #[arg(long, default_value_t = 1.0)]
    initial_gamma: f64,
    /// FISTA backtracking multiplier
    #[arg(long, default_value_t = 2.0)]
    backtrack_factor: f64,
    /// Outer alternating iteration cap
    #[arg(long, default_value_t = 100)]
    outer_max: usize,
    /// Outer relative objective tolerance
    #[arg(long, default_value_t = 1e-5)]
    outer_tolerance: f64,
    /// Threshold descent rounds per outer iteration
    #[arg(long, default_value_t = 20)]
    threshold_steps: usize,
    /// Threshold descent step size ε
    #[arg(long, default_value_t = 0.01)]
    threshold_lr: f64,
    /// Minimum threshold gap kept by the repair sweep
    #[arg(long, default_value_t = 1e-6)]
    min_gap: f64,
    /// Shared layer widths (deep models)
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 16, 16])]
    shared_widths: Vec<usize>,
    /// Task-specific layer widths (deep models)
    #[arg(long, value_delimiter = ',', default_values_t = [8usize, 8, 8])]
    task_widths: Vec<usize>,
    /// SGD learning rate (deep models)
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    /// Disable bias vectors in deep layers
    #[arg(long)]
    no_bias_layers: bool,
    #[command(flatten)]
    csv: CsvArgs,
    #[arg(long, env = "MTOR_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads for individual-setting baselines
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Output model path
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    #[arg(long)]
    no_manifest: bool,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Persisted model JSON
    #[arg(long)]
    model: PathBuf,
    /// Evaluation dataset CSV
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    csv: CsvArgs,
    /// Output report path
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    #[arg(long)]
    no_manifest: bool,
}

#[derive(Args)]
pub struct CvArgs {
    /// Dataset CSV
    #[arg(long)]
    data: PathBuf,
    /// λ grid, comma separated positive reals
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    /// Number of folds
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, value_enum, default_value_t = VariantArg::Immediate)]
    variant: VariantArg,
    /// FISTA iteration cap per fold
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
    /// Outer alternating iteration cap per fold
    #[arg(long, default_value_t = 100)]
    outer_max: usize,
    #[command(flatten)]
    csv: CsvArgs,
    #[arg(long, env = "MTOR_SEED", default_value_t = 0)]
    seed: u64,
    /// Output report path
    #[arg(long, default_value = "cv.json")]
    out: PathBuf,
    #[arg(long)]
    no_manifest: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(args) => commands::generate(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Cv(args) => commands::cv(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
