//! `decoh`: runs decoherence scenarios described by TOML files.

mod commands;
mod config;
mod output;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use commands::{Overrides, TimescaleArgs};

#[derive(Debug, Parser)]
#[command(name = "decoh", version, about = "Decoherence and einselection scenarios")]
struct Cli {
    /// Output directory (overrides `[output] directory`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Seed for every random substream (overrides the config seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results are identical for a fixed count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Wigner snapshot cadence in steps, 0 for none.
    #[arg(long, global = true)]
    snapshot_every: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve a scenario and write trajectory, snapshots, coefficients and analysis tables.
    Run { config: PathBuf },
    /// Print the decoherence and dissipation coefficients of the configured bath.
    Coeffs { config: PathBuf },
    /// Rough decoherence, mixing and wave-packet spreading times.
    Timescales {
        #[arg(long = "m")]
        m: f64,
        #[arg(long = "T")]
        t: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        omega: f64,
        #[arg(long)]
        dx: f64,
        #[arg(long, default_value_t = 1.0)]
        hbar: f64,
        /// Required ratio between successive times for `ordered = true`.
        #[arg(long, default_value_t = 10.0)]
        min_ratio: f64,
    },
    /// Check that no state is left untouched by a non-degenerate decoherence term.
    Nogo { config: PathBuf },
    /// Write the scattering localization kernel of the `[gas]` section.
    Kernel { config: PathBuf },
    /// Run quick internal consistency checks.
    Selftest,
}

fn execute(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("cannot configure the thread pool")?;
    }
    let o = Overrides { out_dir: cli.out_dir, seed: cli.seed, snapshot_every: cli.snapshot_every };
    match cli.command {
        Command::Run { config } => {
            for path in commands::run(&config, &o)? {
                println!("{}", path.display());
            }
        }
        Command::Coeffs { config } => print!("{}", commands::coeffs(&config, &o)?),
        Command::Timescales { m, t, gamma, omega, dx, hbar, min_ratio } => {
            let args = TimescaleArgs { m, t, gamma, omega, dx, hbar, min_ratio };
            print!("{}", commands::timescales_report(&args)?);
        }
        Command::Nogo { config } => print!("{}", commands::nogo(&config, &o)?),
        Command::Kernel { config } => {
            let (path, summary) = commands::kernel(&config, &o)?;
            println!("{}", path.display());
            print!("{summary}");
        }
        Command::Selftest => {
            let (report, pass) = commands::selftest()?;
            print!("{report}");
            return Ok(pass);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
