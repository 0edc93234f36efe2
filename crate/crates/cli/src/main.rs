//! `mptsp`: command-line pipeline for the two-stage stochastic multi-path TSP.
//!
//! Exit codes: 0 success, 1 usage, 2 invalid input, 3 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use thiserror::Error;

mod commands;
mod config;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mptsp::Error),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("invalid argument `{field}`: {message}")]
    Argument { field: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn argument(field: &str, message: impl Into<String>) -> Self {
        CliError::Argument {
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_validation() => 2,
            CliError::Core(mptsp::Error::Io { .. }) => 2,
            CliError::Core(_) => 3,
            CliError::Config { .. } | CliError::Argument { .. } | CliError::Io { .. } => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mptsp", version, about = "Two-stage stochastic multi-path TSP toolkit")]
pub struct Cli {
    /// Master seed; every random stage derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// TOML file whose keys mirror the flags; explicit flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Log progress at info level.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-path instance.
    GenInstance(GenInstanceArgs),
    /// Expand the base scenarios into a pool, optionally split train/out-of-sample.
    ExpandScenarios(ExpandArgs),
    /// Label random tours with their expected recourse.
    GenDataset(GenDatasetArgs),
    /// Train the surrogate network on a dataset.
    Train(TrainArgs),
    /// Train one network per (layers, batch size) and pick the best out-of-sample tour cost.
    GridSearch(GridSearchArgs),
    /// Build and solve (or export) the DE, DA or surrogate model.
    Solve(SolveArgs),
    /// Out-of-sample cost of tours and their GAP to a baseline.
    Evaluate(EvaluateArgs),
    /// Full DE-versus-surrogate comparison over a grid of scenario-set sizes.
    Experiment(ExperimentArgs),
    /// Render timing.svg and a summary from an experiment directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenInstanceArgs {
    #[arg(long, default_value_t = 10)]
    pub nodes: usize,
    #[arg(long, default_value_t = 3)]
    pub paths: usize,
    #[arg(long, default_value_t = 20)]
    pub base_scenarios: usize,
    #[arg(long, default_value_t = 5.0)]
    pub v_min: f64,
    #[arg(long, default_value_t = 15.0)]
    pub v_max: f64,
    /// Side length of the square the nodes are placed in.
    #[arg(long, default_value_t = 100.0)]
    pub extent: f64,
    #[arg(long, default_value = "synthetic")]
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Independent,
    Rowwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Rule {
    Harmonic,
    Mean,
}

impl From<Rule> for mptsp::FirstStageRule {
    fn from(r: Rule) -> Self {
        match r {
            Rule::Harmonic => mptsp::FirstStageRule::HarmonicVelocity,
            Rule::Mean => mptsp::FirstStageRule::MeanTravelTime,
        }
    }
}

impl From<Mode> for mptsp::scenario::ExpansionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Independent => Self::Independent,
            Mode::Rowwise => Self::Rowwise,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Scenarios in the expanded pool.
    #[arg(long)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = Mode::Independent)]
    pub mode: Mode,
    /// Split the pool into `train.json` (this many) and `oos.json` (the rest).
    #[arg(long)]
    pub split: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Scenario set used for labels (default: the instance's base scenarios).
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Number of labelled tours K.
    #[arg(short = 'k', long, default_value_t = 10_000)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = Rule::Harmonic)]
    pub first_stage: Rule,
}

#[derive(Debug, Args)]
pub struct TrainOptions {
    /// Hidden layer widths, e.g. `16,16`.
    #[arg(long, default_value = "16,16")]
    pub arch: String,
    #[arg(long, default_value = "mae")]
    pub loss: String,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
    /// Share of the dataset held out as the test set.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub opts: TrainOptions,
}

#[derive(Debug, Args)]
pub struct GridSearchArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Solving scenario set (defines c̄).
    #[arg(long)]
    pub scenarios: PathBuf,
    /// Out-of-sample scenario set used to rank configurations.
    #[arg(long)]
    pub oos: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Architectures separated by `;`, e.g. `16,16;8,8,16`.
    #[arg(long, default_value = "16,16;8,8,16")]
    pub archs: String,
    #[arg(long, value_delimiter = ',', default_value = "256,1024")]
    pub batch_sizes: Vec<usize>,
    #[arg(long, default_value = "mae")]
    pub loss: String,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, value_enum, default_value_t = BackendArg::Enum)]
    pub backend: BackendArg,
    #[arg(long, value_enum, default_value_t = Rule::Harmonic)]
    pub first_stage: Rule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    De,
    Da,
    Surrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Enum,
    Local,
    Export,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Scenario set (default: the instance's base scenarios).
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModelArg::De)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value_t = BackendArg::Enum)]
    pub backend: BackendArg,
    /// Trained network (surrogate model only).
    #[arg(long)]
    pub network: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    /// Largest node count solved by enumeration.
    #[arg(long, default_value_t = mptsp::milp::DEFAULT_ENUMERATION_CAP)]
    pub cap: usize,
    #[arg(long, value_enum, default_value_t = Rule::Harmonic)]
    pub first_stage: Rule,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Solving scenario set; its first-stage costs are reused out of sample.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    #[arg(long)]
    pub oos: PathBuf,
    /// Tours as node ids, e.g. `1-3-2` (repeatable).
    #[arg(long = "tour")]
    pub tours: Vec<String>,
    /// Solution files written by `solve` (repeatable).
    #[arg(long = "solution")]
    pub solutions: Vec<PathBuf>,
    /// Tour or solution file every candidate is compared against.
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long, value_enum, default_value_t = Rule::Harmonic)]
    pub first_stage: Rule,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Grid of scenario-set sizes.
    #[arg(long, value_delimiter = ',', default_value = "3,10,20")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub train_pool: usize,
    #[arg(long, default_value_t = 200)]
    pub oos_pool: usize,
    #[arg(short = 'k', long, default_value_t = 10_000)]
    pub k: usize,
    #[arg(long, default_value_t = 30)]
    pub runs: usize,
    #[arg(long, value_enum, default_value_t = BackendArg::Enum)]
    pub backend: BackendArg,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, value_enum, default_value_t = Mode::Independent)]
    pub mode: Mode,
    #[arg(long, value_enum, default_value_t = Rule::Harmonic)]
    pub first_stage: Rule,
    /// Also render timing.svg.
    #[arg(long)]
    pub svg: bool,
    #[command(flatten)]
    pub opts: TrainOptions,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Experiment output directory containing timing.csv.
    #[arg(long)]
    pub input: PathBuf,
}

fn parse_cli(args: Vec<std::ffi::OsString>) -> Result<Cli, ExitCode> {
    let fail = |e: CliError| {
        eprintln!("error: {e}");
        ExitCode::from(e.exit_code())
    };
    let mut cmd = Cli::command();
    if let Some(path) = config::find_config_path(&args) {
        let table = config::load(&path).map_err(fail)?;
        cmd = config::apply(cmd, &table).map_err(fail)?;
    }
    let matches = match cmd.try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return Err(ExitCode::from(code));
        }
    };
    Cli::from_arg_matches(&matches).map_err(|e| {
        let _ = e.print();
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    let cli = match parse_cli(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(code) => return code,
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: invalid argument `threads`: must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
