//! `phsim`: simulate port-Hamiltonian systems with monotone boundary feedback.
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver failure,
//! 3 a checked condition failed.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use phsim::Profile;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Io(String),
    Solver(String),
    Check(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Config(_) | Failure::Io(_) => 1,
            Failure::Solver(_) => 2,
            Failure::Check(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
            Failure::Solver(m) => write!(f, "solver failure: {m}"),
            Failure::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "phsim", version, about = "Port-Hamiltonian systems with monotone boundary feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Setup {
    /// TOML run configuration
    config: Option<PathBuf>,
    /// catalog scenario (instead of naming one in the config)
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// override, e.g. --set dt=0.001 --set stepper=backward-euler
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Setup {
    fn load(self) -> Result<RunConfig, Failure> {
        RunConfig::assemble(self.config.as_deref(), self.scenario, self.seed, &self.sets)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and write trace.csv and summary.json
    Run {
        #[command(flatten)]
        setup: Setup,
        /// output directory (default: the config's, else out/<scenario>)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the sufficient conditions for exponential stability
    Check {
        #[command(flatten)]
        setup: Setup,
        /// n1, n2 or eb (default: the scenario's)
        #[arg(long)]
        profile: Option<Profile>,
    },
    /// Evaluate the transfer function at points of the right half-plane
    Transfer {
        #[command(flatten)]
        setup: Setup,
        /// evaluation point such as 2 or 0.5+3i (repeatable)
        #[arg(long = "lambda", allow_hyphen_values = true)]
        lambdas: Vec<String>,
        /// also evaluate at this many seeded random points
        #[arg(long, default_value_t = 0)]
        grid: usize,
        /// CSV file (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every variant of the config's [sweep] table
    Sweep {
        #[command(flatten)]
        setup: Setup,
        #[arg(long)]
        out: Option<PathBuf>,
        /// concurrent runs (default: available cores)
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Show the scenario catalog
    List {
        #[arg(long)]
        json: bool,
    },
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { setup, out } => commands::run(&setup.load()?, out),
        Command::Check { setup, profile } => commands::check(&setup.load()?, profile),
        Command::Transfer { setup, lambdas, grid, out } => commands::transfer(&setup.load()?, &lambdas, grid, out),
        Command::Sweep { setup, out, jobs } => {
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            commands::sweep(&setup.load()?, out, jobs)
        }
        Command::List { json } => commands::list(json),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("phsim: {f}");
            ExitCode::from(f.code() as u8)
        }
    }
}
