//! `grazing-lab` command-line driver.
//!
//! Exit codes: 0 on success, 1 on invalid input or configuration, 2 when a
//! run completes but an estimate is flagged unreliable or a check fails.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::SweepQuantity;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl From<grazing_lab::LabError> for CliError {
    fn from(e: grazing_lab::LabError) -> Self {
        match e {
            grazing_lab::LabError::Input(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

/// What a command reports after writing its outputs.
#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// Outputs were written but some estimate or check failed.
    Flagged(String),
}

#[derive(Parser, Debug)]
#[command(name = "grazing-lab", version, about = "Fuzzy Boltzmann and Landau dissipation experiments")]
struct Cli {
    /// Verbose logging (same as RUST_LOG=debug).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `mc.seed` and GRAZING_LAB_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent sampling streams and worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output file (CSV, or JSON for the check commands).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dissipation, action and weak-form functionals over an ε list.
    Functionals {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pair: Option<String>,
        #[arg(long, value_delimiter = ',')]
        eps_list: Option<Vec<f64>>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// A Boltzmann quantity over ε against its Landau limit.
    GrazingSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pair: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        eps_list: Option<Vec<f64>>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, value_enum)]
        quantity: Option<SweepQuantity>,
        /// SVG plot path; defaults to the CSV path with an `.svg` extension.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Particle simulation of the scaled fuzzy Boltzmann equation.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        theta_min: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        /// Trace CSV; same as `--out`.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Final particle dump, one row per particle.
        #[arg(long)]
        snapshot_out: Option<PathBuf>,
    },
    /// Conditions on the dual dissipation pairs; JSON report.
    CheckPairs {
        #[command(flatten)]
        common: Common,
        /// `quadratic`, `cosh`, `custom` or `all`.
        #[arg(long, default_value = "all")]
        pair: String,
        /// Registry name of `Ψ*` for `--pair custom`.
        #[arg(long)]
        psi_star: Option<String>,
    },
    /// Collision-map conservation and sphere identities; JSON report.
    CheckGeometry {
        #[command(flatten)]
        common: Common,
        /// 2 or 3; both when absent.
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, default_value_t = 100_000)]
        frames: usize,
    },
}

fn dispatch(cmd: Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Functionals { common, pair, eps_list, samples } => commands::functionals(&common, pair, eps_list, samples),
        Command::GrazingSweep { common, pair, gamma, nu, eps_list, samples, quantity, plot } => {
            commands::grazing_sweep(&common, commands::SweepFlags { pair, gamma, nu, eps_list, samples, quantity, plot })
        }
        Command::Simulate { common, n, dt, horizon, theta_min, eps, gamma, kappa, trace_out, snapshot_out } => commands::simulate(
            &common,
            commands::SimulateFlags { n, dt, horizon, theta_min, eps, gamma, kappa, trace_out, snapshot_out },
        ),
        Command::CheckPairs { common, pair, psi_star } => commands::check_pairs(&common, &pair, psi_star),
        Command::CheckGeometry { common, dim, frames } => commands::check_geometry(&common, dim, frames),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Flagged(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}
