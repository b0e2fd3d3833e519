//! Command-line harness for the exact tabular monotonic-improvement toolkit.
//!
//! Subcommands: `certify` (randomized bound certification), `improve` (exact
//! bound-guided policy improvement), `train` (trust-region training with
//! experience replay over an alpha x seed grid), `export-env` (environment
//! MDP as JSON).
//!
//! Exit codes: 0 success, 1 usage error, 2 invariant violation.

mod commands;
mod config;
mod envspec;
mod output;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use commands::certify::CertifyArgs;
use commands::export_env::ExportEnvArgs;
use commands::improve::ImproveArgs;
use commands::train::TrainArgs;
use config::FileConfig;

#[derive(Parser, Debug)]
#[command(name = "monobound", version, about)]
struct Cli {
    /// Root seed; together with the config it fully determines every output.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat key = value config file; command-line flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (certify/improve/export-env) or directory (train).
    /// Defaults to stdout, or ./train_out for train.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certify every bound inequality on random tuples; exit 2 on violation.
    Certify(CertifyArgs),
    /// Run the exact bound-guided improver; per-iteration CSV.
    Improve(ImproveArgs),
    /// Run TRPO-with-replay training cells; per-cell and aggregate CSVs.
    Train(TrainArgs),
    /// Export an environment's MDP as JSON.
    ExportEnv(ExportEnvArgs),
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed = file.resolve("seed", cli.seed, 1)?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Certify(args) => commands::certify::run(args, &file, seed, out),
        Command::Improve(args) => commands::improve::run(args, &file, out),
        Command::Train(args) => commands::train::run(args, &file, seed, out),
        Command::ExportEnv(args) => commands::export_env::run(args, &file, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
