//! JSON-configured runs, parameter-scaling sweeps and ledger queries.

mod config;
mod run;

pub use config::{ExperimentConfig, TaskSource, SEED_ENV};
pub use run::{ledger, load_task, run, sweep, sweep_csv, SweepAxis, SweepRow, TrialReport};
