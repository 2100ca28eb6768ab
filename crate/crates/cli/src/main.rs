//! `treeauto`: fixed points, classification, parameter sweeps and Monte
//! Carlo checks for tree automata on Galton–Watson trees.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit codes.
const EXIT_COMPUTE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "treeauto", version, about = "Fixed points and interpretability of tree automata")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// CSV output path (tables still go to stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Offspring truncation mass for Ψ.
    #[arg(long, global = true, default_value_t = 1e-12)]
    eps: f64,
    /// Residual tolerance for fixed points.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    /// Grid points for the two-colour root search.
    #[arg(long, global = true, default_value_t = 10_000)]
    grid: usize,
    /// Worker threads (default: all cores). Never changes the output.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List the fixed points of Ψ.
    FixedPoints,
    /// Pivot-tree analysis and verdict for one fixed point.
    Classify,
    /// Fixed points and verdicts over a parameter grid.
    Sweep {
        /// Directory for per-segment `lambda p` plot tables; defaults to
        /// `<out>.plots` when `--out` is given.
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Monte Carlo estimates against exact pivot-tree values.
    Simulate {
        /// Write the first sampled trees in annotated Newick form here.
        #[arg(long)]
        dump: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        dump_count: u64,
    },
    /// Exact enumeration over the colourings of an explicit tree.
    Oracle,
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Compute(String),
}

impl Failure {
    pub fn config(e: impl std::fmt::Display) -> Self {
        Failure::Config(e.to_string())
    }

    pub fn compute(e: impl std::fmt::Display) -> Self {
        Failure::Compute(e.to_string())
    }
}

/// How a successful run ended.
#[derive(Debug, PartialEq, Eq)]
pub enum Completion {
    Full,
    Partial,
    /// Finished, but a statistical check failed.
    Rejected,
}

fn run(cli: &Cli) -> Result<Completion, Failure> {
    if !(cli.eps > 0.0 && cli.eps < 1.0) || !(cli.tol > 0.0) || cli.grid < 2 {
        return Err(Failure::Config("need 0 < eps < 1, tol > 0 and grid >= 2".into()));
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(Failure::config)?;
    }
    let path = cli.config.as_ref().ok_or_else(|| Failure::Config("--config is required".into()))?;
    let loaded = config::load(path)?;
    match &cli.command {
        Command::FixedPoints => commands::fixed_points(cli, &loaded),
        Command::Classify => commands::classify(cli, &loaded),
        Command::Sweep { plots } => commands::sweep(cli, &loaded, plots.as_deref()),
        Command::Simulate { dump, dump_count } => {
            commands::simulate(cli, &loaded, dump.as_deref(), *dump_count)
        }
        Command::Oracle => commands::oracle(cli, &loaded),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Completion::Full) => ExitCode::SUCCESS,
        Ok(Completion::Partial) => ExitCode::from(EXIT_PARTIAL),
        Ok(Completion::Rejected) => ExitCode::from(EXIT_COMPUTE),
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Compute(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_COMPUTE)
        }
    }
}
