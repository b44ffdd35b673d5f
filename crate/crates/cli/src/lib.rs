//! Command-line front end for the `shds` toolkit.
//!
//! Every command reads a TOML config, runs one analysis and writes CSV
//! outputs plus a `manifest.json` into `--out`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod output;
pub mod svg;

pub use commands::{
    cmd_average, cmd_certify, cmd_fig1, cmd_recur, cmd_simulate, cmd_sweep, AverageFlags, CertifyFlags, Fig1Flags,
    RecurFlags, SimulateFlags, SweepFlags,
};
pub use output::RunManifest;

/// Worker-thread count for ensemble and grid work; `0` or unset means auto.
pub const THREADS_ENV: &str = "SHDS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "shds", version, about = "Stochastic hybrid systems: simulate, average, certify")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML system/analysis config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed; path `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an ensemble of sample paths.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: SimulateFlags,
    },
    /// Estimate the average map and the convergence function.
    Average {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: AverageFlags,
    },
    /// Check the Lyapunov-Foster conditions on the average system.
    Certify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: CertifyFlags,
    },
    /// Estimate recurrence to a ball around the target set.
    Recur {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: RecurFlags,
    },
    /// Smallest certified recurrence radius across ε.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: SweepFlags,
    },
    /// Jammed extremum-seeking sample paths and figure.
    Fig1 {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: Fig1Flags,
    },
}

/// Result of an analysis; `Fail` maps to exit code 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::Fail => 2,
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Simulate { common, flags } => cmd_simulate(&common, &flags).map(|_| Outcome::Pass),
        Command::Average { common, flags } => cmd_average(&common, &flags).map(|_| Outcome::Pass),
        Command::Certify { common, flags } => {
            let r = cmd_certify(&common, &flags)?;
            print!("{}", r.text);
            Ok(r.outcome)
        }
        Command::Recur { common, flags } => {
            let r = cmd_recur(&common, &flags)?;
            print!("{}", r.text);
            Ok(r.outcome)
        }
        Command::Sweep { common, flags } => {
            let r = cmd_sweep(&common, &flags)?;
            print!("{}", r.text);
            Ok(r.outcome)
        }
        Command::Fig1 { common, flags } => cmd_fig1(&common, &flags).map(|_| Outcome::Pass),
    }
}

/// Applies [`THREADS_ENV`] to the global rayon pool.
pub fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_ENV} must be a nonnegative integer, got {raw:?}"))?;
    if n == 0 {
        return Ok(());
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
        bail!("could not configure {n} worker threads: {e}");
    }
    Ok(())
}
