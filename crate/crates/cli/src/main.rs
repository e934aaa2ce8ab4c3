//! `ipet`: run one experiment, sweep k or h, or print a parameter ledger.
//!
//! Exit status: 0 success, 2 invalid config or data, 3 divergence,
//! 4 frozen parameters drifted, 1 anything else.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ipet_core::experiment::{ledger, run, sweep, sweep_csv, ExperimentConfig, SweepAxis, SEED_ENV};
use ipet_core::Error;

#[derive(Parser)]
#[command(name = "ipet", version, about = "Parameter-efficient tuning on miniature audio transformers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one configuration, writing a JSON report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides every seed in the config (and PEFT_SEED).
        #[arg(long)]
        seed: Option<u64>,
        /// Report path; defaults to the config's `output`, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One run per value of k or h, written as CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the parameter ledger without training.
    Ledger {
        #[arg(long)]
        config: PathBuf,
        /// Also write the ledger as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_status(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Input(_) | Error::Json(_) | Error::Data(_) | Error::Io { .. } => 2,
        Error::Divergence { .. } => 3,
        Error::FrozenDrift { .. } => 4,
        _ => 1,
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(s) => Some(s.trim().parse::<u64>().map_err(|e| Error::Config(format!("{SEED_ENV}={s:?}: {e}")))?),
        Err(_) => None,
    };
    if let Some(seed) = seed.or(env_seed) {
        cfg.override_seed(seed);
    }
    Ok(cfg)
}

fn write(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let cfg = load(&config, seed)?;
            let report = run(&cfg)?;
            let json = report.to_json();
            match out.or(cfg.output) {
                Some(path) => {
                    write(&path, &json)?;
                    eprintln!("{} {} = {:.4}; report written to {}", report.method, report.metric.name, report.metric.value, path.display());
                }
                None => print!("{json}"),
            }
        }
        Command::Sweep { config, axis, values, out, seed } => {
            let cfg = load(&config, seed)?;
            let rows = sweep(&cfg, axis, &values)?;
            write(&out, &sweep_csv(&rows))?;
            eprintln!("{} rows written to {}", rows.len(), out.display());
        }
        Command::Ledger { config, out } => {
            let cfg = load(&config, None)?;
            let ledger = ledger(&cfg)?;
            print!("{}", ledger.to_table());
            if let Some(path) = out {
                write(&path, &ledger.to_csv())?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_status(&err))
        }
    }
}
