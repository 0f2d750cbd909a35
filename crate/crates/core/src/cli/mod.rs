//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 numerical degeneracy, 1 failure writing output.

mod commands;
pub mod ingest;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use commands::{cmd_cq, cmd_critvals, cmd_mc, cmd_partial, load_table, CqOutput, McOutput, PartialOutput};
pub use ingest::{ingest_csv, IngestError};
pub use output::Format;

use crate::report::Method;
use crate::Error;

/// Environment variable naming a critical-value table that replaces the built-in one.
pub const TABLE_ENV: &str = "XQGRAM_CRITVAL_TABLE";

#[derive(Debug, Parser)]
#[command(name = "xqgram", version, about = "Cross-quantilogram estimation and tests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cross-quantilograms with intervals and portmanteau tests.
    Cq(CqArgs),
    /// Partial cross-quantilograms given control variables.
    Partial(PartialArgs),
    /// Size and power experiments on simulated data.
    Mc(McArgs),
    /// Simulate self-normalized critical values.
    Critvals(CritvalsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Sb,
    Sn,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Sb => Method::StationaryBootstrap,
            MethodArg::Sn => Method::SelfNormalized,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Input CSV file(s) with a header row.
    #[arg(long, required = true, value_delimiter = ',')]
    pub input: Vec<PathBuf>,
    /// Column of the predicted series (name or one-based position).
    #[arg(long)]
    pub x1: String,
    /// Column of the predictor series.
    #[arg(long)]
    pub x2: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LagArgs {
    /// Use lags 1..=max-lag.
    #[arg(long)]
    pub max_lag: Option<usize>,
    /// Explicit lags, e.g. `1,5,12` or `1-60`.
    #[arg(long)]
    pub lags: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InferenceArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Sb)]
    pub method: MethodArg,
    /// Bootstrap replicates.
    #[arg(long = "B")]
    pub b: Option<usize>,
    /// Stationary-bootstrap parameter; omitted means automatic choice.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Self-normalization trimming.
    #[arg(long, default_value_t = 0.1)]
    pub omega: f64,
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    pub tau: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CqArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Quantile levels of x1: a list like `0.05,0.1` or a range `0.05:0.95:0.05`.
    #[arg(long, required = true, value_delimiter = ',')]
    pub alpha1: Vec<String>,
    /// Quantile levels of x2.
    #[arg(long, required = true, value_delimiter = ',')]
    pub alpha2: Vec<String>,
    #[command(flatten)]
    pub lags: LagArgs,
    /// Portmanteau orders; default all lags 1..=max.
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<usize>,
    #[command(flatten)]
    pub inference: InferenceArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PartialArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Control columns.
    #[arg(long, required = true, value_delimiter = ',')]
    pub controls: Vec<String>,
    /// Quantile levels of the controls; a single value applies to all.
    #[arg(long, required = true, value_delimiter = ',')]
    pub beta: Vec<f64>,
    #[arg(long, required = true, value_delimiter = ',')]
    pub alpha1: Vec<String>,
    #[arg(long, required = true, value_delimiter = ',')]
    pub alpha2: Vec<String>,
    #[command(flatten)]
    pub lags: LagArgs,
    #[command(flatten)]
    pub inference: InferenceArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_dgp(s: &str) -> Result<crate::mc::DgpKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct McArgs {
    /// Data-generating process: 1 (independent normals) or 2 (GARCH-X).
    #[arg(long, value_parser = parse_dgp)]
    pub dgp: crate::mc::DgpKind,
    /// Sample sizes.
    #[arg(long = "T", required = true, value_delimiter = ',')]
    pub t: Vec<usize>,
    /// Portmanteau orders.
    #[arg(long, value_delimiter = ',', default_values_t = [1])]
    pub p: Vec<usize>,
    /// Equal-pair quantile levels.
    #[arg(long, required = true, value_delimiter = ',')]
    pub alpha: Vec<String>,
    #[arg(long, default_value_t = 300)]
    pub nrep: usize,
    #[arg(long, default_value_t = crate::mc::DEFAULT_BURN_IN)]
    pub burn_in: usize,
    #[command(flatten)]
    pub inference: InferenceArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CritvalsArgs {
    #[arg(long, value_delimiter = ',', default_values_t = 1..=10usize)]
    pub p: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1])]
    pub omega: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.05, 0.1])]
    pub tau: Vec<f64>,
    #[arg(long, default_value_t = crate::selfnorm::DEFAULT_N_GRID)]
    pub n_grid: usize,
    #[arg(long, default_value_t = crate::selfnorm::DEFAULT_N_REP)]
    pub n_rep: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory; the table is written as `critvals.csv`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Failure of a command, classified for the exit code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical degeneracy: {0}")]
    Numerical(String),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Output(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    /// Classifies a library error, prefixing `context` to its message.
    pub fn from_core(e: Error, context: &str) -> Self {
        let msg = if context.is_empty() { e.to_string() } else { format!("{context}: {e}") };
        match e {
            e if e.is_numerical() => CliError::Numerical(msg),
            Error::InvalidSeries(_) | Error::TableFormat { .. } => CliError::Data(msg),
            _ => CliError::Config(msg),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Runs a parsed command and prints a short summary to stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Cq(a) => {
            let out = cmd_cq(&a)?;
            for p in &out.peaks {
                println!(
                    "alpha=({}, {}): peak_lag={} peak_value={:.6}",
                    p.alpha1, p.alpha2, p.peak_lag, p.peak_value
                );
            }
            print_files(&out.files);
        }
        Command::Partial(a) => {
            let out = cmd_partial(&a)?;
            println!("{} partial records", out.records.len());
            print_files(&out.files);
        }
        Command::Mc(a) => {
            let out = cmd_mc(&a)?;
            print!("{}", out.text);
            print_files(&out.files);
        }
        Command::Critvals(a) => {
            let path = cmd_critvals(&a)?;
            print_files(&[path]);
        }
    }
    Ok(())
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("xqgram: {e}");
            e.exit_code()
        }
    }
}
