//! Experiment harness: seeded Monte Carlo batches over the precoder design
//! loop, written out as CSV aggregates plus raw JSON-lines records.

pub mod config;
pub mod convergence;
pub mod error;
pub mod output;
pub mod schema;
pub mod single;
pub mod stats;
pub mod sweep;

use std::path::PathBuf;

use rayon::prelude::*;
use vlc_secure_ee::design::dinkelbach_solve_seeded;
use vlc_secure_ee::geometry::{generate_realization, init_seed};
use vlc_secure_ee::{InitMode, SolveReport, SolverOptions, SystemConfig};

pub use config::ExperimentConfig;
pub use error::CliError;

/// Where outputs go and how many worker threads solve realizations.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl RunContext {
    pub fn new(out_dir: PathBuf, workers: Option<usize>) -> Self {
        let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        Self { out_dir, workers }
    }

    /// Maps `f` over `0..n` on a pool of `workers` threads, keeping input order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Result<Vec<T>, CliError>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        if self.workers == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
        Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
    }
}

/// Solves realization `index` of the batch seeded with `seed`.
///
/// The realization fixes the user positions; the init seed only matters for
/// random starts, so both init modes see the same channels.
pub fn solve_realization(
    scenario: &SystemConfig,
    init: InitMode,
    seed: u64,
    index: u64,
) -> Result<SolveReport, vlc_secure_ee::Error> {
    let ch = generate_realization(scenario, seed, index)?;
    let opts = SolverOptions { init, ..SolverOptions::from(&scenario.solver) };
    dinkelbach_solve_seeded(&ch, &scenario.power_constants(), &scenario.thresholds(), &opts, init_seed(seed, index))
}
