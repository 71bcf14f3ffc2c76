//! Command-line front end: fit, predict, compare, simulate and check.

pub mod check;
pub mod fit;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use sfda_core::config::ModelVariant;
use sfda_core::posterior::DEFAULT_GRID;
use sfda_core::{Error, Result};

pub use check::{cmd_diagnose, cmd_simulate};
pub use fit::{cmd_fit, RunManifest};
pub use report::{cmd_coefficients, cmd_lpml, cmd_predict, cmd_summarize};

pub const EXIT_OK: i32 = 0;
/// A diagnostic check ran and failed.
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Name of the copy of the input data kept beside each draws directory.
pub const DATA_COPY: &str = "data.csv";
/// Name of the run manifest written by `fit`.
pub const RUN_MANIFEST: &str = "run.json";

#[derive(Debug, Parser)]
#[command(name = "sfda", version, about = "Bayesian functional trajectories for athletics results")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Gibbs sampler and write posterior draws.
    Fit(FitArgs),
    /// Posterior trajectory of one athlete plus the season after their last.
    Predict(PredictArgs),
    /// Log pseudo-marginal likelihood of one or more fitted models.
    Lpml(LpmlArgs),
    /// Generate a synthetic dataset and its generating values.
    Simulate(SimulateArgs),
    /// Joint-distribution checks of every update and a recovery study.
    Diagnose(DiagnoseArgs),
    /// Descriptive statistics of a results file.
    Summarize(SummarizeArgs),
    /// Posterior summaries of the regression coefficients.
    Coefficients(CoefficientsArgs),
}

#[derive(Clone, Debug, Args)]
pub struct FitArgs {
    /// Results CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Model M1..M6.
    #[arg(long)]
    pub model: Option<ModelVariant>,
    /// Model configuration JSON; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Hyperparameter JSON; missing fields keep their defaults.
    #[arg(long)]
    pub hyper: Option<PathBuf>,
    /// Sampler sweeps [default: 20000].
    #[arg(long)]
    pub iters: Option<usize>,
    /// Burn-in as a fraction of the sweeps [default: 0.6].
    #[arg(long)]
    pub burnin: Option<f64>,
    /// Keep every n-th sweep after burn-in [default: 5].
    #[arg(long)]
    pub thin: Option<usize>,
    /// Chain seed [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent chains run in parallel, seeded seed, seed + 1, ...
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

impl FitArgs {
    /// Arguments for `model` with every optional setting left at its default.
    pub fn new(data: impl Into<PathBuf>, model: ModelVariant, out: impl Into<PathBuf>) -> Self {
        Self {
            data: data.into(),
            model: Some(model),
            config: None,
            hyper: None,
            iters: None,
            burnin: None,
            thin: None,
            seed: None,
            chains: 1,
            out: out.into(),
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct PredictArgs {
    /// Directory written by `fit` (one chain).
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub athlete: String,
    /// Points on the observed part of the career.
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: usize,
    /// Points on the predicted season.
    #[arg(long, default_value_t = 101)]
    pub ahead_grid: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trajectory CSV; defaults to trajectory_<athlete>.csv in the draws directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct LpmlArgs {
    /// Directory written by `fit`; repeat to compare models.
    #[arg(long = "draws", required = true)]
    pub draws: Vec<PathBuf>,
    /// Also write the records as a JSON array here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct SimulateArgs {
    /// Synthetic-data JSON; defaults to the recovery-study design.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long, default_value_t = 11)]
    pub seed: u64,
    /// Halve the draws of this update, e.g. `loadings`; its check must then fail.
    #[arg(long)]
    pub fault: Option<String>,
    #[arg(long)]
    pub skip_geweke: bool,
    #[arg(long)]
    pub skip_recovery: bool,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    /// Sampler iterations per recovery replicate.
    #[arg(long, default_value_t = 4000)]
    pub iters: usize,
    /// Write the full report as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Also write the table as CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct CoefficientsArgs {
    #[arg(long)]
    pub draws: PathBuf,
    /// Also write the table as CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit status for an error: 2 bad input or configuration, 3 numerical
/// failure, 4 file system.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Io { .. } | Error::Truncated { .. } => EXIT_IO,
        Error::NonFinite { .. } | Error::NotPositiveDefinite(_) | Error::Unnormalizable => EXIT_NUMERIC,
        _ => EXIT_SCHEMA,
    }
}

/// Prints an error and converts the outcome to an exit status.
pub(crate) fn finish(outcome: Result<i32>) -> i32 {
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    })
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Lpml(a) => cmd_lpml(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Summarize(a) => cmd_summarize(a),
        Command::Coefficients(a) => cmd_coefficients(a),
    }
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text + "\n").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
