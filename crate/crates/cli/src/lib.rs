//! Command-line runner for the viscolab experiments.
//!
//! A run is fully determined by its TOML configuration, the command-line
//! overrides and the seed. Each run writes the resolved configuration
//! (`config.toml`), a JSON summary (`summary.json`) and command-specific CSV
//! tables into the output directory.

pub mod config;
pub mod error;
pub mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{CommandKind, ExperimentConfig};
pub use error::CliError;
pub use run::{execute, run, Artifacts, Outcome};

/// Worker-count override for the parallel sweeps and expansions.
pub const THREADS_ENV: &str = "VISCOLAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "viscolab", version, about = "Barriers, expanding-ball solves and uniqueness experiments")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every randomised check in the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print nothing on success.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the barrier inequality on a grid of the ball.
    VerifyBarrier(BarrierArgs),
    /// Solve one Dirichlet problem.
    Solve(GridArgs),
    /// Expanding-ball construction with stabilisation, local-bound and growth tables.
    Entire(ExpansionArgs),
    /// Two-solution experiment.
    Uniqueness(ExpansionArgs),
    /// Structure-condition sweeps for a library Hamiltonian.
    CheckHamiltonian(CheckArgs),
    /// Numerical oracles.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Debug, Args)]
pub struct BarrierArgs {
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub big_lambda: Option<f64>,
    #[arg(long)]
    pub gamma1: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub c_r_scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExpansionArgs {
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Infimum of (|u|^{s-1}u - |v|^{s-1}v)/(u-v)^s over u > v.
    DeltaS {
        /// Exponents, comma separated.
        #[arg(long, value_delimiter = ',')]
        s: Vec<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Cli {
    pub fn kind(&self) -> CommandKind {
        match self.command {
            Command::VerifyBarrier(_) => CommandKind::VerifyBarrier,
            Command::Solve(_) => CommandKind::Solve,
            Command::Entire(_) => CommandKind::Entire,
            Command::Uniqueness(_) => CommandKind::Uniqueness,
            Command::CheckHamiltonian(_) => CommandKind::CheckHamiltonian,
            Command::Oracle(_) => CommandKind::Oracle,
        }
    }

    /// Loads the configuration file (if any) and applies the overrides.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Schema {
                    key: "config".into(),
                    message: format!("cannot read {}: {e}", path.display()),
                })?;
                ExperimentConfig::from_toml(&text)?
            }
            None => ExperimentConfig::default(),
        };
        set(&mut cfg.seed, self.seed);
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        match &self.command {
            Command::VerifyBarrier(a) => {
                let b = &mut cfg.barrier;
                set(&mut b.s, a.s);
                set(&mut b.m, a.m);
                set(&mut b.n, a.n);
                set(&mut b.lambda, a.lambda);
                set(&mut b.big_lambda, a.big_lambda);
                set(&mut b.gamma1, a.gamma1);
                set(&mut b.gamma, a.gamma);
                set(&mut b.delta, a.delta);
                set(&mut b.radius, a.radius);
                set(&mut b.h, a.h);
                set(&mut b.c_r_scale, a.c_r_scale);
            }
            Command::Solve(a) => {
                set(&mut cfg.grid.dim, a.dim);
                set(&mut cfg.grid.h, a.h);
                set(&mut cfg.grid.radius, a.radius);
            }
            Command::Entire(a) => {
                set(&mut cfg.entire.k_max, a.k_max);
                set(&mut cfg.grid.h, a.h);
                set(&mut cfg.grid.dim, a.dim);
            }
            Command::Uniqueness(a) => {
                set(&mut cfg.uniqueness.k_max, a.k_max);
                set(&mut cfg.grid.h, a.h);
                set(&mut cfg.grid.dim, a.dim);
            }
            Command::CheckHamiltonian(a) => {
                set(&mut cfg.hamiltonian_check.samples, a.samples);
                set(&mut cfg.hamiltonian_check.dim, a.dim);
            }
            Command::Oracle(OracleCommand::DeltaS { s, samples }) => {
                if !s.is_empty() {
                    cfg.oracle.s = s.clone();
                }
                set(&mut cfg.oracle.samples, *samples);
            }
        }
        Ok(cfg)
    }
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| error::schema(THREADS_ENV, "must be a positive integer"))?;
        // A pool that already exists keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = configure_threads().and_then(|()| {
        let cfg = cli.resolve()?;
        let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("viscolab-out"));
        run(cli.kind(), &cfg, &out)
    });
    match result {
        Ok(outcome) => {
            if !cli.quiet || !outcome.passed {
                println!(
                    "{} {}: {} ({})",
                    if outcome.passed { "PASS" } else { "FAIL" },
                    cli.kind().name(),
                    outcome.headline,
                    outcome.out_dir.display()
                );
            }
            i32::from(!outcome.passed)
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
