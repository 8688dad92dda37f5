//! `tentlab`: run coefficient analyses, decompositions, solves and probes
//! from a TOML config or flags, and aggregate probe reports.
//!
//! Exit status: 0 on success, 2 on invalid input, 3 on numerical failure.

mod commands;
mod config;
mod error;

use clap::{Parser, Subcommand};
use config::{resolve, CommonArgs, ProbeArgs};
use error::{CliError, CliResult};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "tentlab", version, about = "Carleson-perturbation experiments on the upper half-space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ellipticity and the weak-DKP, DKP and sup-deviation Carleson norms of a preset.
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Split A = B + C with sup|t∇B| ≤ eps.
    Decompose {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        probe: ProbeArgs,
    },
    /// Flatten with the map built from the smooth part and check the conjugated coefficients.
    Conjugate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        probe: ProbeArgs,
    },
    /// Dirichlet solve on the unit strip.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Boundary data as a trigonometric sum, e.g. "cos1 + 0.5sin3".
        #[arg(long, default_value = "cos1")]
        data: String,
    },
    /// Run a probe: dirichlet, regularity, perturbation, bilipschitz, ibp,
    /// moser, duality, codim-radial or codim-identities.
    Probe {
        /// Probe name; falls back to `probe.name` in the config file.
        name: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        probe: ProbeArgs,
    },
    /// Merge report.json files into one table keyed by (probe, preset, J, p).
    Report {
        /// Report files or glob patterns.
        #[arg(required = true)]
        inputs: Vec<String>,
        #[arg(long, default_value = "tentlab-out")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Analyze { common } => commands::analyze(&resolve(&common, &ProbeArgs::default())?),
        Command::Decompose { common, probe } => commands::decompose(&resolve(&common, &probe)?),
        Command::Conjugate { common, probe } => commands::conjugate(&resolve(&common, &probe)?),
        Command::Solve { common, data } => commands::solve(&resolve(&common, &ProbeArgs::default())?, &data),
        Command::Probe { name, common, probe } => {
            let r = resolve(&common, &probe)?;
            let name = name
                .or_else(|| r.probe_name.clone())
                .ok_or_else(|| CliError::Validation("no probe name given (argument or probe.name in the config)".into()))?;
            if !commands::PROBES.contains(&name.as_str()) {
                return Err(CliError::Validation(format!(
                    "unknown probe '{name}' (known: {})",
                    commands::PROBES.join(", ")
                )));
            }
            commands::probe(&name, &r)
        }
        Command::Report { inputs, out } => commands::aggregate_reports(&inputs, &out),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
