//! `copas-bias`: publication-bias tests for meta-analysis from the command line.

mod commands;
mod error;
mod funnel;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "copas-bias", version, about)]
struct Cli {
    /// Worker threads for bootstrap and simulation (default: all cores).
    /// Results do not depend on it.
    #[arg(long, global = true, env = "COPAS_BIAS_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sup-score test for publication bias with a bootstrap p-value.
    Test(TestArgs),
    /// Selection-model fits at fixed (γ0, γ1) or over a sweep.
    Sensitivity(SensitivityArgs),
    /// Monte-Carlo rejection rates of the tests under a simulated design.
    Simulate(SimulateArgs),
    /// Contour-enhanced funnel plot as SVG plus its coordinates as CSV.
    Funnel(FunnelArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Information {
    Expected,
    Observed,
}

impl From<Information> for copas_core::InformationKind {
    fn from(i: Information) -> Self {
        match i {
            Information::Expected => copas_core::InformationKind::Expected,
            Information::Observed => copas_core::InformationKind::Observed,
        }
    }
}

#[derive(Args, Debug)]
pub struct GridArgs {
    /// γ0 range as `lo,hi` (default -2,2).
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    gamma0_range: Option<(f64, f64)>,
    /// γ1 range as `lo,hi` (default: derived from the standard errors).
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    gamma1_range: Option<(f64, f64)>,
    /// Lattice points per axis.
    #[arg(long, default_value_t = 50)]
    lattice: usize,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    input: PathBuf,
    /// Grid points drawn from the lattice.
    #[arg(long, default_value_t = 9)]
    grid_points: usize,
    #[arg(long, default_value_t = 200)]
    b_boot: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    grid: GridArgs,
    /// Information used to standardize the score.
    #[arg(long, value_enum, default_value_t = Information::Expected)]
    information: Information,
    /// Comparator tests to run alongside (egger, tf, naive or none).
    #[arg(long, value_delimiter = ',', default_value = "egger,tf,naive")]
    comparators: Vec<String>,
    /// Keep the bootstrap T* values in the report.
    #[arg(long)]
    keep_boot: bool,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SensitivityArgs {
    input: PathBuf,
    #[arg(
        long,
        allow_hyphen_values = true,
        requires = "gamma1",
        conflicts_with = "sweep"
    )]
    gamma0: Option<f64>,
    #[arg(long, requires = "gamma0")]
    gamma1: Option<f64>,
    /// Fit over an evenly spaced sweep of the grid ranges, endpoints included.
    #[arg(long, required_unless_present = "gamma0")]
    sweep: bool,
    /// Values per axis in the sweep.
    #[arg(long, default_value_t = 5)]
    sweep_size: usize,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the fits as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Model {
    Copas,
    AltInvS2,
    AltZscore,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// JSON power-study description; flags given explicitly override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    #[arg(long)]
    tau2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    gamma0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    gamma1: Option<f64>,
    #[arg(long, value_enum)]
    model: Option<Model>,
    /// Scaling constant of the z-score selection model.
    #[arg(long)]
    c: Option<f64>,
    /// Add N(0,1) noise to the z-score selection equation.
    #[arg(long)]
    zscore_noise: bool,
    /// Standard errors are |N(s_loc, s_scale²)|.
    #[arg(long, allow_hyphen_values = true)]
    s_loc: Option<f64>,
    #[arg(long)]
    s_scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Tests to run (score, egger, tf, naive).
    #[arg(long, value_delimiter = ',')]
    tests: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long)]
    b_boot: Option<usize>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long, value_enum)]
    information: Option<Information>,
    /// Include mean seconds per replicate (makes the output non-reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write rejection rates as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FunnelArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Coordinates CSV (default: next to the SVG).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Confidence levels of the significance contours.
    #[arg(long, value_delimiter = ',', default_value = "0.90,0.95,0.99")]
    contours: Vec<f64>,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|_| format!("bad number `{lo}`"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|_| format!("bad number `{hi}`"))?;
    if lo > hi {
        return Err(format!("range lower bound {lo} exceeds upper bound {hi}"));
    }
    Ok((lo, hi))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Data("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Test(args) => commands::test(&args),
        Command::Sensitivity(args) => commands::sensitivity(&args),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Funnel(args) => funnel::run(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let summary: Vec<&str> = text
                .lines()
                .take_while(|l| !l.trim().is_empty())
                .map(str::trim)
                .collect();
            let summary = summary.join(" ");
            eprintln!("error[usage]: {}", summary.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
