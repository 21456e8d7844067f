//! Config-driven experiment runner for `bsdelab-core`: JSON configs in,
//! JSON reports and CSV series out.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{ExperimentConfig, ExperimentKind};
pub use report::{Outcome, RunReport};
pub use runner::{run, RunError, RunSummary};

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "BSDELAB_THREADS";

/// Size the global thread pool from [`THREADS_ENV`] when it is set.
pub fn init_threads() -> Result<(), String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v.trim().parse().map_err(|_| format!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
            if n == 0 {
                return Err(format!("{THREADS_ENV} must be positive"));
            }
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
        }
        Err(_) => Ok(()),
    }
}
