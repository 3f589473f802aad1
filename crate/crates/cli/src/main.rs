//! `spanvi`: generate MDP fixtures, run value iteration, verify traces
//! against the convergence bounds, and sweep discount factors.
//!
//! Exit codes: 0 success, 1 failed hard check or internal error, 2 usage or
//! input error, 3 non-convergence.

mod common;
mod generate;
mod solve;
mod sweep;
mod verify;

use clap::{Parser, Subcommand};

use common::{CliError, EXIT_CHECK_FAILED, EXIT_NO_CONVERGENCE, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "spanvi", version, about = "Span-seminorm value iteration toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded fixture and its provenance sidecar.
    Generate(generate::GenerateArgs),
    /// Run value iteration on a fixture; writes a trace CSV and a summary JSON.
    Solve(solve::SolveArgs),
    /// Check a trace against every applicable bound.
    Verify(verify::VerifyArgs),
    /// Solve many (gamma, seed, variant) combinations in parallel.
    Sweep(sweep::SweepArgs),
}

fn default_seed() -> Result<u64, CliError> {
    match std::env::var("SPANVI_SEED") {
        Ok(s) => s
            .parse()
            .map_err(|_| CliError::Input(format!("SPANVI_SEED must be an integer, got `{s}`"))),
        Err(_) => Ok(0),
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Generate(args) => generate::run(&args).map(|_| EXIT_OK),
        Command::Solve(args) => solve::run(&args).map(|_| EXIT_OK),
        Command::Verify(args) => {
            let pass = verify::run(&args)?;
            if !pass {
                eprintln!("verify: at least one hard check failed");
            }
            Ok(if pass { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Sweep(args) => {
            let any_ok = sweep::run(&args, default_seed()?)?;
            Ok(if any_ok { EXIT_OK } else { EXIT_NO_CONVERGENCE })
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
