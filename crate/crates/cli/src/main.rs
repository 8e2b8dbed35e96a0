//! `pexcite`: generate regressor signals, test and decompose their excitation,
//! and simulate gradient adaptive laws.
//!
//! Every subcommand accepts `--config <file.json>` whose keys are the flag names
//! (with `_` in place of `-`); flags given on the command line take precedence.
//! A run writes `<command>.manifest.json` into its output directory, and passing
//! that manifest back through `--config` repeats the run.
//!
//! Exit codes: `0` the analysis passed, `1` it failed, `2` usage or input error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

mod commands;
mod config;

use commands::{Kind, Outcome};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] pexcite::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(pexcite::Error::Divergence { .. }) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pexcite", version, about = "Persistent-excitation analysis of regressor signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a signal from one of the built-in generators and write it as CSV.
    Generate(GenerateFlags),
    /// Matrix and per-axis directional PE tests.
    Analyze(AnalyzeFlags),
    /// Estimate the PE subspace and check regularity.
    Diagnose(DiagnoseFlags),
    /// Split a signal into its PE and complementary parts.
    Decompose(DecomposeFlags),
    /// Integrate the gradient adaptive law driven by a signal.
    Simulate(SimulateFlags),
}

#[derive(Debug, Args, Serialize)]
struct Common {
    /// JSON config file (or a manifest from an earlier run).
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,

    /// Directory for reports and the run manifest.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct GenerateFlags {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,

    #[arg(long, value_enum)]
    kind: Option<Kind>,

    /// Last sampled time.
    #[arg(long)]
    horizon: Option<f64>,

    #[arg(long)]
    dt: Option<f64>,

    #[arg(long)]
    t0: Option<f64>,

    /// Sinusoid frequencies, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    freqs: Option<Vec<f64>>,

    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    amps: Option<Vec<f64>>,

    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    phases: Option<Vec<f64>>,

    /// Decay rate of the exponential envelope.
    #[arg(long)]
    rate: Option<f64>,

    /// Constant value (also the amplitude carried by the pathological pair).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    value: Option<Vec<f64>>,

    /// Dimension of the zero signal.
    #[arg(long)]
    dim: Option<usize>,

    /// Output CSV; defaults to `signal.csv` in the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct TestFlags {
    /// Signal CSV.
    #[arg(long)]
    signal: Option<PathBuf>,

    /// Window length.
    #[arg(long = "T", visible_alias = "window")]
    #[serde(rename = "T")]
    window: Option<f64>,

    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,

    /// First window start considered; defaults to the start of the signal.
    #[arg(long, allow_hyphen_values = true)]
    t_tail: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct AnalyzeFlags {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,

    #[command(flatten)]
    #[serde(flatten)]
    test: TestFlags,
}

#[derive(Debug, Args, Serialize)]
struct EstimateFlags {
    #[arg(long)]
    eig_tol: Option<f64>,

    /// Random probe directions per probe family.
    #[arg(long)]
    n_dirs: Option<usize>,

    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
struct DiagnoseFlags {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,

    #[command(flatten)]
    #[serde(flatten)]
    test: TestFlags,

    #[command(flatten)]
    #[serde(flatten)]
    estimate: EstimateFlags,
}

#[derive(Debug, Args, Serialize)]
struct DecomposeFlags {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,

    #[command(flatten)]
    #[serde(flatten)]
    test: TestFlags,

    #[command(flatten)]
    #[serde(flatten)]
    estimate_params: EstimateFlags,

    /// JSON subspace (or a `diagnose` report) giving the PE subspace.
    #[arg(long)]
    subspace: Option<PathBuf>,

    /// JSON subspace used as the complement; defaults to the orthogonal complement.
    #[arg(long)]
    complement: Option<PathBuf>,

    /// Estimate the PE subspace from the signal instead of reading it.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    estimate: Option<bool>,
}

#[derive(Debug, Args, Serialize)]
struct SimulateFlags {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,

    /// Regressor CSV.
    #[arg(long)]
    signal: Option<PathBuf>,

    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    psi_true: Option<Vec<f64>>,

    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    psi_hat0: Option<Vec<f64>>,

    /// Scalar gain g for Γ = g·I; matrix gains go in the config file.
    #[arg(long)]
    gain: Option<f64>,

    /// Integration step; defaults to the signal's grid step.
    #[arg(long)]
    dt: Option<f64>,

    /// Final time; defaults to the end of the signal.
    #[arg(long)]
    t_end: Option<f64>,

    #[arg(long)]
    integrator: Option<String>,

    /// Fraction of the run, counted from the end, where the error must stay small.
    #[arg(long)]
    tail_fraction: Option<f64>,

    /// Bound on |e| over the tail.
    #[arg(long)]
    tol: Option<f64>,

    /// PE subspace JSON for the affine-set check.
    #[arg(long)]
    subspace: Option<PathBuf>,

    /// Bound on the distance from the affine set (and on the retention gap).
    #[arg(long)]
    membership_tol: Option<f64>,

    /// Treat `psi_hat0` as prior knowledge and compare the limit with its retention target.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    retention: Option<bool>,
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Generate(f) => commands::generate(config::resolve(f.common.config.as_deref(), &f)?),
        Command::Analyze(f) => commands::analyze(config::resolve(f.common.config.as_deref(), &f)?),
        Command::Diagnose(f) => commands::diagnose(config::resolve(f.common.config.as_deref(), &f)?),
        Command::Decompose(f) => commands::decompose(config::resolve(f.common.config.as_deref(), &f)?),
        Command::Simulate(f) => commands::simulate(config::resolve(f.common.config.as_deref(), &f)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
