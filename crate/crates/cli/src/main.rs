//! Operator surface for the stack: run protocols end to end, sweep the
//! security bounds into CSV, and generate deterministic fixtures.

mod config;
mod fixtures;
mod run;
mod sweep;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;
use run::RunStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    Qkd,
    Ot,
    Token,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Role {
    /// Emission side of the link.
    Alice,
    /// Detection side of the link.
    Bob,
    /// Host both parties over the in-process loopback.
    Both,
}

#[derive(Parser)]
#[command(name = "qstack", version, about = "prepare-and-measure protocol stack")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a protocol using the configured channel.
    Run {
        #[arg(long)]
        config: std::path::PathBuf,
        #[arg(long, value_enum)]
        protocol: Protocol,
        #[arg(long, value_enum, default_value = "both")]
        role: Role,
        /// Override the channel seed (64 hex chars).
        #[arg(long)]
        seed: Option<String>,
        /// Use the literal final penalty term in the reported bound.
        #[arg(long)]
        eq4_literal: bool,
        /// Spot-check counts only commitment failures, not value errors.
        #[arg(long)]
        step6_literal: bool,
    },
    /// Evaluate a security-bound sweep and write it as CSV.
    Sweep(sweep::SweepArgs),
    /// Write deterministic desk-scale fixtures.
    GenFixtures(fixtures::GenArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn parse_seed(seed: &str) -> Result<[u8; 32]> {
    let bytes = hex::decode(seed).context("--seed must be hex")?;
    bytes
        .try_into()
        .map_err(|_| anyhow::anyhow!("--seed must be 32 bytes (64 hex chars)"))
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            protocol,
            role,
            seed,
            eq4_literal,
            step6_literal,
        } => {
            let config = RunConfig::load(&config)?;
            let seed_override = seed.as_deref().map(parse_seed).transpose()?;
            if run::verbosity() >= 1 {
                eprintln!("running {protocol:?} as {role:?}");
            }
            let status = run::cmd_run(
                &config,
                protocol,
                role,
                seed_override,
                eq4_literal,
                step6_literal,
            )?;
            match status {
                RunStatus::Completed(reports) => {
                    run::print_reports(&reports, config.channel.rep_rate_hz);
                    Ok(ExitCode::from(0))
                }
                RunStatus::Aborted(reason) => {
                    println!("abort_reason: {reason}");
                    Ok(ExitCode::from(2))
                }
            }
        }
        Command::Sweep(args) => {
            sweep::cmd_sweep(&args)?;
            Ok(ExitCode::from(0))
        }
        Command::GenFixtures(args) => {
            for path in fixtures::cmd_gen_fixtures(&args)? {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::from(0))
        }
    }
}
