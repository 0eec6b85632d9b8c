mod commands;
mod config;

use std::fmt;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vgpp_core::error::Error as CoreError;

use config::{CalibMethod, Contract, PathDirection, PriceMethod, Process};

/// Simulation, pricing and calibration for the Variance Gamma++ process.
///
/// Every command reads an optional JSON configuration (--config) whose values
/// are overridden by flags. Worker threads are set with VGPP_THREADS; results
/// do not depend on it. Exit status: 0 success, 1 numerical failure, 2 usage,
/// input or I/O error.
#[derive(Parser)]
#[command(name = "vgpp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate clock or VG++ paths and summarise the terminal values
    Simulate(SimulateArgs),
    /// Price one European call
    Price(PriceArgs),
    /// Fit the model to a price series or to call quotes
    Calibrate(CalibrateArgs),
    /// Price an American put or a discretely monitored lookback call
    Exotic(ExoticArgs),
    /// Simulate correlated subordinators (and optional Brownian layers)
    Multisim(MultisimArgs),
    /// Compare series, FFT and Monte Carlo call prices over a strike/maturity grid
    Triangle(TriangleArgs),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// JSON file with the model parameters {theta, sigma, a, alpha, beta}
    #[arg(long, value_name = "FILE")]
    params: Option<PathBuf>,
    /// Seed of the random streams
    #[arg(long)]
    seed: Option<u64>,
    /// Output file for the main report (stdout if absent)
    #[arg(long, short, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MarketArgs {
    /// Initial forward price
    #[arg(long)]
    f0: Option<f64>,
    /// Continuously compounded interest rate
    #[arg(long)]
    rate: Option<f64>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Process to simulate [default: vgpp]
    #[arg(long)]
    process: Option<Process>,
    /// Generate paths from the origin or from the terminal value backwards [default: forward]
    #[arg(long)]
    direction: Option<PathDirection>,
    /// Number of paths [default: 1]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    paths: Option<u64>,
    /// Number of time steps [default: 252]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    steps: Option<u64>,
    /// Time horizon in years [default: 1]
    #[arg(long)]
    horizon: Option<f64>,
    /// Also write the paths as CSV (t,z or t,z,x; a leading path column when several)
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct PriceArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    market: MarketArgs,
    /// Pricing method [default: closed]
    #[arg(long)]
    method: Option<PriceMethod>,
    /// Strike
    #[arg(long)]
    strike: Option<f64>,
    /// Maturity in years
    #[arg(long)]
    maturity: Option<f64>,
    /// Monte Carlo paths [default: 1000000]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    paths: Option<u64>,
}

#[derive(Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    market: MarketArgs,
    /// Estimation method
    #[arg(long)]
    method: Option<CalibMethod>,
    /// Input CSV: date,price for mle/gmm, K,T,mid for nlls
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExoticArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    market: MarketArgs,
    /// Contract to price
    #[arg(long)]
    contract: Option<Contract>,
    /// Strike
    #[arg(long)]
    strike: Option<f64>,
    /// Maturity in years
    #[arg(long)]
    maturity: Option<f64>,
    /// Simulated paths [default: 100000]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    paths: Option<u64>,
    /// Exercise or monitoring dates [default: 66]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    steps: Option<u64>,
    /// Path generation order for the American put [default: backward]
    #[arg(long)]
    direction: Option<PathDirection>,
    /// Polynomial degree of the regression basis [default: 3]
    #[arg(long)]
    degree: Option<usize>,
    /// Emit a CSV sweep over initial prices instead of one JSON report
    #[arg(long)]
    sweep: bool,
}

#[derive(Args)]
pub struct MultisimArgs {
    #[command(flatten)]
    common: Common,
    /// Number of time steps [default: 252]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    steps: Option<u64>,
    /// Time horizon in years [default: 1]
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Args)]
pub struct TriangleArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    market: MarketArgs,
    /// Monte Carlo paths per maturity [default: 1000000]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    paths: Option<u64>,
    /// Also write the grid as plot-ready CSV
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(CoreError),
    Io(io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(CoreError::Numerical(_)) => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Writes `bytes` to `path`, or to stdout.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => File::create(p)
            .and_then(|mut f| f.write_all(bytes))
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("VGPP_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("VGPP_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Price(a) => commands::price(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Exotic(a) => commands::exotic(a),
        Command::Multisim(a) => commands::multisim(a),
        Command::Triangle(a) => commands::triangle(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vgpp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
