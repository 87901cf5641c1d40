//! Independent runs in parallel.

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{invalid, Result};

/// A rayon pool with `workers` threads; 0 means one per core.
pub fn worker_pool(workers: usize) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))
}

/// Runs `job(0..runs)` on `workers` threads and returns the results in run
/// order, so any later merge is independent of scheduling. The first failing
/// run (by index) determines the error.
pub fn run_ensemble<T, F>(runs: u64, workers: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let pool = worker_pool(workers)?;
    let results: Vec<Result<T>> = pool.install(|| (0..runs).into_par_iter().map(&job).collect());
    results.into_iter().collect()
}
