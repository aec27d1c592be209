use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use modpoly::config::{ExperimentConfig, ExperimentKind};
use modpoly::error::CliError;
use modpoly::run::execute;

/// Analytical and trained MLP solutions for modular arithmetic.
#[derive(Debug, Parser)]
#[command(name = "modpoly", version)]
struct Args {
    /// Experiment to run.
    #[arg(value_enum)]
    command: ExperimentKind,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Replaces the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Parent directory for the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the slow, larger-modulus settings where an experiment has them.
    #[arg(long)]
    long: bool,
}

fn run(args: Args) -> Result<(), CliError> {
    let raw = std::fs::read(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let text = String::from_utf8(raw.clone()).map_err(|_| CliError::Config("config is not UTF-8".into()))?;
    let cfg = ExperimentConfig::from_json(&text)?.with_overrides(args.command, args.seed, args.out)?;
    let record = execute(&cfg, &raw, args.long)?;
    // A closed stdout (e.g. piped into `head`) is not a failure of the run.
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&record.payload)?);
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("modpoly: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
