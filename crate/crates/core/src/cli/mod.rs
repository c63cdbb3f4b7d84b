//! The `cslbounds` command line.

pub mod commands;
pub mod config;
pub mod output;
pub mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{CliError, Flags};

#[derive(Debug, Parser)]
#[command(name = "cslbounds", version, about = "CSL noise spectra and exclusion bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Also render SVG plots.
    #[arg(long, global = true)]
    pub svg: bool,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "CSLBOUNDS_THREADS", value_name = "N")]
    pub threads: Option<usize>,
    /// Write one-sided spectra (twice the double-sided values).
    #[arg(long, global = true)]
    pub one_sided: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Displacement, force or torque noise spectrum.
    Spectrum,
    /// Upper bounds on lambda over a grid of rC.
    Exclusion,
    /// Monte Carlo Langevin trajectories.
    Simulate,
    /// Analytic cross-checks against frozen reference values.
    Pointcheck {
        /// Collapse rate in 1/s; defaults to [collapse] of --config or 1e-16.
        #[arg(long)]
        lambda: Option<f64>,
        /// Override the reduced Planck constant (J s).
        #[arg(long)]
        hbar: Option<f64>,
    },
}

fn config_path(cli: &Cli) -> Result<&PathBuf, CliError> {
    cli.config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config FILE is required for this command".into()))
}

/// Run the parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        eprintln!("error: --threads must be >= 1");
        return 2;
    }
    // Only fails if a pool already exists, in which case that one is used.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    let flags = Flags {
        svg: cli.svg,
        out: cli.out.clone(),
        one_sided: cli.one_sided,
        threads: rayon::current_num_threads(),
    };
    let result = match &cli.command {
        Command::Spectrum => config_path(&cli).and_then(|p| commands::cmd_spectrum(p, &flags)),
        Command::Exclusion => config_path(&cli).and_then(|p| commands::cmd_exclusion(p, &flags)),
        Command::Simulate => config_path(&cli).and_then(|p| commands::cmd_simulate(p, &flags)),
        Command::Pointcheck { lambda, hbar } => {
            let lambda = match (lambda, &cli.config) {
                (Some(l), _) => Ok(*l),
                (None, Some(path)) => commands::load_config(path).map(|(c, _)| c.collapse.lambda),
                (None, None) => Ok(1e-16),
            };
            match lambda.and_then(|l| commands::cmd_pointcheck(l, *hbar)) {
                Ok(true) => return 0,
                Ok(false) => return 1,
                Err(e) => Err(e),
            }
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
