//! `losgate`: simulate → fit-pathloss → train-gpc → build-cache → localize →
//! evaluate.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 numerical failure.

/// `println!` that stays quiet when stdout is closed early, as with `| head`.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use losgate::{ErrorKind, Lookup};

#[derive(Parser)]
#[command(name = "losgate", version, about = "NLOS-aware BLE RSSI positioning")]
struct Cli {
    /// Increase log verbosity (-v, -vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a scenario file.
    Simulate(SimulateArgs),
    /// Fit the log-distance path-loss model to a log with groundtruth.
    FitPathloss(FitArgs),
    /// Train the LOS classifier.
    TrainGpc(TrainArgs),
    /// Tabulate the classifier on a (distance, RSSI) grid.
    BuildCache(BuildCacheArgs),
    /// Run the particle filter.
    Localize(LocalizeArgs),
    /// Score filter traces and write report tables.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct FitArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub groundtruth: PathBuf,
    #[arg(long)]
    pub beacons: PathBuf,
    /// Fit only windows labelled LOS.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Output parameter file (TOML).
    #[arg(long)]
    pub out: PathBuf,
    /// Median window (s).
    #[arg(long, default_value_t = 0.01)]
    pub window: f64,
    /// Reference distance (m).
    #[arg(long, default_value_t = 1.78)]
    pub d0: f64,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub groundtruth: PathBuf,
    #[arg(long)]
    pub beacons: PathBuf,
    /// Output model file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub window: f64,
    /// Training-set size after stratified downsampling.
    #[arg(long, default_value_t = 1000)]
    pub downsample: usize,
    #[arg(long, default_value_t = 50.0)]
    pub max_range: f64,
    /// Points used for the hyperparameter search (0 = all).
    #[arg(long, default_value_t = 300)]
    pub opt_points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum LookupArg {
    Nearest,
    Bilinear,
}

impl From<LookupArg> for Lookup {
    fn from(l: LookupArg) -> Self {
        match l {
            LookupArg::Nearest => Lookup::Nearest,
            LookupArg::Bilinear => Lookup::Bilinear,
        }
    }
}

#[derive(Args)]
pub struct BuildCacheArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Output grid file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub d_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub d_max: f64,
    #[arg(long, default_value_t = -100.0, allow_hyphen_values = true)]
    pub rssi_min: f64,
    #[arg(long, default_value_t = -40.0, allow_hyphen_values = true)]
    pub rssi_max: f64,
    #[arg(long, default_value_t = 0.1)]
    pub d_step: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rssi_step: f64,
    #[arg(long, value_enum, default_value = "nearest")]
    pub lookup: LookupArg,
    #[arg(long, default_value_t = losgate::cache::DEFAULT_NODE_CAP)]
    pub max_nodes: usize,
}

#[derive(Args)]
pub struct LocalizeArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Filter variant; repeat the flag for several.
    #[arg(long, value_parser = ["pfg", "pfg-c", "pfl", "pfl-c"])]
    pub mode: Vec<String>,
    #[arg(long)]
    pub particles: Option<usize>,
    /// Resample when the ESS falls below this count.
    #[arg(long)]
    pub ess_threshold: Option<f64>,
    /// LOS probability above which the base likelihood is used.
    #[arg(long)]
    pub p_los: Option<f64>,
    /// Seed of the first run; run k uses seed + k.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repeat: Option<usize>,
    /// Overrides `out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_parser = ["pfg", "pfg-c", "pfl", "pfl-c"])]
    pub mode: Vec<String>,
    /// Trace directory; defaults to `out_dir`.
    #[arg(long)]
    pub traces: Option<PathBuf>,
    /// Report directory; defaults to `out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub cdf_points: usize,
    /// Median window for the ROC samples (s).
    #[arg(long, default_value_t = 0.01)]
    pub window: f64,
    /// Also write SVG plots.
    #[arg(long)]
    pub svg: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::FitPathloss(a) => commands::fit(a),
        Command::TrainGpc(a) => commands::train(a),
        Command::BuildCache(a) => commands::build_cache(a),
        Command::Localize(a) => commands::localize(a),
        Command::Evaluate(a) => commands::evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            })
        }
    }
}
