//! `mkofl` command-line harness: run experiments, compare algorithms on
//! shared data and replay the evaluation oracles on a saved trace.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mkofl::Error;

pub mod compare;
pub mod config;
pub mod manifest;
pub mod oracle;
pub mod run;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const RUNTIME: i32 = 1;
    pub const CONFIG: i32 = 2;
}

#[derive(Debug, Parser)]
#[command(name = "mkofl", version, about = "Multiple-kernel online federated learning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write its traces, summary and manifest.
    Run(RunArgs),
    /// Run several algorithms on the same data and align their MSE curves.
    Compare(CompareArgs),
    /// Recompute regret, the centralized kernel PMF and the martingale check
    /// from a verbose trace.
    Oracle(OracleArgs),
}

/// Flags shared by every command that builds an experiment config.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set rounds=1000` or
    /// `--set dataset.noise_sd=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Algorithm seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// sk_ofl, mk_ofl, naive_mk or central_omkl.
    #[arg(long)]
    pub algo: Option<String>,
    /// Path of a CSV or time-series dataset.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Keep per-kernel losses and PMFs in the trace.
    #[arg(long)]
    pub verbose_trace: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, short = 'o', default_value = "mkofl-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Complete configs to compare. Without them the base config is
    /// expanded according to `--runs`.
    pub configs: Vec<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Comma-separated run families for the expansion: mk, sk (one run per
    /// dictionary kernel), naive, central.
    #[arg(long, default_value = "mk,sk,naive", value_delimiter = ',')]
    pub runs: Vec<String>,
    #[arg(long, short = 'o', default_value = "mkofl-compare")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Verbose trace written by `mkofl run --verbose-trace`.
    #[arg(long)]
    pub trace: PathBuf,
    /// Config of the traced run; the `config.toml` written next to the trace
    /// replays it exactly.
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Monte-Carlo index resamples per frozen state.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Number of frozen mid-run states for the martingale check.
    #[arg(long, default_value_t = 10)]
    pub frozen: usize,
    /// Output directory; defaults to the trace's directory.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: exit::CONFIG, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { code: exit::RUNTIME, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Ingestion { .. } | Error::Shape { .. } => exit::CONFIG,
            _ => exit::RUNTIME,
        };
        Self { code, message: e.to_string() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run_with_args<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&args).map_err(|e| CliError { code: exit::CONFIG, message: e.to_string() })?;
    let recorded: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    dispatch(cli, &recorded)
}

pub fn dispatch(cli: Cli, args: &[String]) -> CliResult<()> {
    match cli.command {
        Command::Run(a) => run::execute(&a, args).map(|_| ()),
        Command::Compare(a) => compare::execute(&a, args).map(|_| ()),
        Command::Oracle(a) => oracle::execute(&a, args).map(|_| ()),
    }
}
