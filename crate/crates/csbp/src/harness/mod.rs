//! Experiments, reports, parallel replication runner and the command line.

mod cli;
mod config;
mod experiments;
mod stats;

pub use cli::cli_main;
pub use config::{apply_override, parse_mechanism, ExperimentConfig, ExperimentKind, ExperimentParams, OutputConfig, SpeedConfig};
pub use experiments::{
    run_experiment, run_law_validation, run_strong_convergence, run_weak_convergence, Check, ExperimentReport, LevelReport, Verdict,
};
pub use stats::{frequency, mean_se, KmCdf, Obs};

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Worker count from `CSBP_WORKERS` (default: all cores).
pub fn workers() -> usize {
    std::env::var("CSBP_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Runs `f(rep)` for rep in 0..reps on the worker pool; results come back in replication order.
pub fn run_reps<T, F>(reps: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers())
        .build()
        .map_err(|e| Error::numeric(format!("cannot start worker pool: {e}"), 0.0))?;
    pool.install(|| (0..reps as u64).into_par_iter().map(&f).collect())
}
