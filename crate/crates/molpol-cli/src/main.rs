//! `molpol`: config-driven runner for vibronic polariton spectra and rates.
//!
//! `molpol run <config.toml>` executes the configured tasks and writes one
//! table per task plus a `summary.json` into the output directory.
//! `molpol validate <config.toml>` checks the configuration and reports the
//! derived quantities without computing anything.
//!
//! Exit codes: 0 success, 1 filesystem error, 2 unusable configuration
//! (diagnostic names the key and its line), 3 numerical failure.

mod config;
mod output;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::CliError;

#[derive(Parser)]
#[command(name = "molpol", version, about = "Vibronic polariton spectra and rates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the tasks in a run configuration.
    Run {
        /// Path to the TOML run configuration.
        config: PathBuf,
        /// Write artifacts here instead of the configured directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Worker threads for sweep points.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        threads: u16,
    },
    /// Check a configuration and report derived quantities without running.
    Validate {
        /// Path to the TOML run configuration.
        config: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            output_dir,
            threads,
        } => {
            let mut cfg = config::load(&config)?;
            if let Some(dir) = output_dir {
                cfg.out_dir = dir;
            }
            let files = runner::run(&cfg, threads as usize)?;
            output::write_all(&cfg.out_dir, &files)?;
            for (name, _) in &files {
                println!("wrote {}", cfg.out_dir.join(name).display());
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = config::load(&config)?;
            print!("{}", runner::validate_report(&cfg, &config));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
