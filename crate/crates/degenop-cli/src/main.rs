//! `degenop`: manufactured-solution solves, time evolutions, the estimate
//! suite and window sweeps, each writing CSVs plus a `manifest.json`.
//!
//! Exit codes: 0 on success, 1 when a check fails, 2 on a bad config.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "degenop", version, about = "Solvers and estimate checks for boundary-degenerate operators")]
struct Cli {
    /// TOML run configuration; defaults describe the Laplacian in L^2.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "degenop-out")]
    out: PathBuf,
    /// Worker threads for the data-parallel loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for every random probe; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Refinement levels J, comma separated; overrides the config.
    #[arg(long, global = true, value_delimiter = ',')]
    refine: Option<Vec<usize>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve (lambda - L) u = f for a manufactured u and report the error.
    #[command(name = "solve_elliptic")]
    SolveElliptic,
    /// Evolve u' = L u + f towards a manufactured solution.
    #[command(name = "solve_parabolic")]
    SolveParabolic,
    /// Run estimate checks: `all`, `window`, or comma-separated check ids.
    Verify { suite: String },
    /// Run the window-dependent checks along a parameter range.
    Sweep {
        /// One of m, p, alpha, alpha1, alpha2, drift_c.
        parameter: String,
        start: f64,
        stop: f64,
        #[arg(default_value_t = 5)]
        count: usize,
    },
}

/// A problem with the configuration or the command line.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(levels) = &cli.refine {
        cfg.grid.levels = levels.clone();
        cfg.suite.levels = Some(levels.clone());
    }
    cfg.validate()?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError("--threads: need at least one thread".into()).into());
        }
        degenop::par::init_threads(n);
    }
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| ConfigError(format!("--out {}: {e}", cli.out.display())))?;
    let ctx = commands::Context { cfg, out: cli.out, threads: cli.threads };
    match cli.command {
        Command::SolveElliptic => commands::solve_elliptic(&ctx),
        Command::SolveParabolic => commands::solve_parabolic(&ctx),
        Command::Verify { suite } => commands::verify(&ctx, &suite),
        Command::Sweep { parameter, start, stop, count } => commands::sweep(&ctx, &parameter, start, stop, count),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
