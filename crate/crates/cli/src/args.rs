use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "funcmed", version, about = "Functional causal mediation analysis")]
pub struct Cli {
    /// Worker threads (default: all cores). Never changes any output byte.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset from the event-design benchmark.
    Simulate(SimulateArgs),
    /// Fit the mediator and outcome regressions.
    Fit(FitArgs),
    /// Effect curves from a saved fit.
    Effects(EffectsArgs),
    /// Subject bootstrap bands for the effect curves.
    Bootstrap(BootstrapArgs),
    /// Cross-validate the smoothing parameters.
    Cv(CvArgs),
    /// Cross-validated influence-window selection.
    SelectDelta(SelectDeltaArgs),
    /// Plot-ready CSVs from saved fit and bootstrap artifacts.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimModel {
    Concurrent,
    Historical,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: SimModel,
    /// Influence window of the historical truth (number or "inf").
    #[arg(long)]
    pub delta: Option<String>,
    /// Number of subjects.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// Time points per curve.
    #[arg(long, default_value_t = 150)]
    pub n_time: usize,
    /// Sampling interval.
    #[arg(long, default_value_t = 2.0)]
    pub tr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,
    /// Spacing between event onsets.
    #[arg(long, default_value_t = 40.0)]
    pub iti: f64,
    /// Probability that an event is a case.
    #[arg(long, default_value_t = 0.5)]
    pub p_case: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub z: PathBuf,
    #[arg(long)]
    pub m: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    /// Model configuration JSON.
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EffectsArgs {
    /// fit.json written by `fit` or `bootstrap`.
    #[arg(long)]
    pub fit: PathBuf,
    /// One effect curve per subject (its treatment curve against zero).
    #[arg(long, requires = "z")]
    pub per_subject: bool,
    /// Treatment curves for `--per-subject`.
    #[arg(long)]
    pub z: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Percentile,
    BiasCorrected,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Bootstrap replicates (at least 50).
    #[arg(long, default_value_t = 200)]
    pub b: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, value_enum, default_value_t = Method::Percentile)]
    pub method: Method,
    /// Bands per subject instead of the unit contrast.
    #[arg(long)]
    pub per_subject: bool,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Comma-separated smoothing parameters; default is a scaled log grid.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectDeltaArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Window candidates for every path, e.g. `0,2,4,6,inf`.
    #[arg(long, value_delimiter = ',', required_unless_present_all = ["grid_mz", "grid_yz", "grid_ym"])]
    pub grid: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub grid_mz: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub grid_yz: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub grid_ym: Option<Vec<String>>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub fit: PathBuf,
    /// bootstrap.json written by `bootstrap`.
    #[arg(long)]
    pub bootstrap: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}
