//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands;
use crate::error::CliResult;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "EGAN_OUT";

#[derive(Debug, Parser)]
#[command(name = "egan", version, about = "Calibrated energy-based GAN experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve and certify the finite-space minimax game.
    Tabular(TabularArgs),
    /// Train a 2D model and write a run directory.
    Train(TrainArgs),
    /// Held-out KL table for a finished run.
    Eval(EvalArgs),
    /// Write energy grids, samples or gradient fields as CSV/PGM.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory. Defaults to a directory under $EGAN_OUT (or ./runs).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TabularArgs {
    #[command(flatten)]
    pub common: Common,
    /// Calibrating term: neg-entropy, l2 or constant.
    #[arg(long)]
    pub k: Option<String>,
    /// Size of the data space.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of random data distributions to certify.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Base seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Train this many consecutive seeds concurrently, one subdirectory each.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    /// Suppress per-snapshot progress lines.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    /// Override grid keys (x_min, x_max, y_min, y_max, nx, ny).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Generator and data samples drawn for the histograms.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Output directory. Defaults to <run>/eval.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportKind {
    Energy,
    Samples,
    Gradfield,
    Truth,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub what: ExportKind,
    /// Run directory (all kinds except `truth`).
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Dataset for `truth`.
    #[arg(long)]
    pub data: Option<String>,
    /// Override grid keys (x_min, x_max, y_min, y_max, nx, ny).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Number of points for `samples` and `gradfield`.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Output directory. Defaults to <run>/export, or a truth directory under
    /// the output root.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code: 0 success, 1 usage or I/O error, 2 failed check.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Tabular(a) => commands::tabular(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Export(a) => commands::export(&a),
    }
}

/// `$EGAN_OUT`, or `runs` in the working directory.
pub fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}
