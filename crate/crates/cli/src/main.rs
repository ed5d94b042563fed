//! Batch front-end: spectra, exact simulation and second-moment analysis
//! written as CSV/JSON artifacts.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Flags, RunConfig};
use fractal_wave::Error;

#[derive(Parser, Debug)]
#[command(name = "fractal-wave", version, about = "Damped stochastic wave equation on p.c.f. fractals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Check gluing consistency and the harmonic renormalisation
    Validate,
    /// Eigenpairs of the level-n Laplacian (spectrum.csv, eigenvectors.csv)
    Spectrum,
    /// Table of V and V̇ for one (β, λ) (kernel.csv)
    Kernel,
    /// Exact-in-distribution sample paths (trajectory.csv)
    Simulate,
    /// Exact variogram and exponent fit (variogram.csv, fit.json)
    Variogram,
    /// Stationary variances and convergence gaps (equilibrium.csv)
    Equilibrium,
    /// Run the acceptance checks and write a pass/fail summary
    Report,
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

fn exit_code(e: &Error) -> u8 {
    if e.is_input_error() {
        EXIT_VALIDATION
    } else {
        EXIT_NUMERICAL
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = RunConfig::resolve(&cli.flags).and_then(|cfg| match cli.command {
        Command::Validate => commands::validate(&cfg).map(|_| true),
        Command::Spectrum => commands::spectrum(&cfg).map(|_| true),
        Command::Kernel => commands::kernel(&cfg).map(|_| true),
        Command::Simulate => commands::simulate(&cfg).map(|_| true),
        Command::Variogram => commands::variogram(&cfg).map(|_| true),
        Command::Equilibrium => commands::equilibrium(&cfg).map(|_| true),
        Command::Report => commands::report(&cfg),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NUMERICAL),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
