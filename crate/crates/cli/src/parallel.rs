//! Thread-pool execution of core work chunks.
//!
//! The core crate expresses parallelism through the [`ChunkMapper`] trait
//! and keeps every reduction order fixed, so results are bit-identical for
//! any thread count — the pool only changes wall-clock time.

use keydet_core::parallel::ChunkMapper;
use rayon::prelude::*;

use crate::error::{CliError, Result};

/// Order of precedence for the worker count: `--threads` flag, then the
/// `KEYDET_THREADS` environment variable, then all available cores.
pub const THREADS_ENV: &str = "KEYDET_THREADS";

pub fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        if n == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(value) => value.parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Input(format!(
                "{THREADS_ENV}={value} is not a positive thread count"
            ))
        }),
        Err(_) => Ok(std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)),
    }
}

/// A [`ChunkMapper`] backed by a dedicated rayon pool.
pub struct PoolMapper {
    pool: rayon::ThreadPool,
}

impl PoolMapper {
    pub fn new(threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Input(format!("cannot build thread pool: {e}")))?;
        Ok(PoolMapper { pool })
    }
}

impl ChunkMapper for PoolMapper {
    fn map_chunks<R: Send>(&self, count: usize, job: &(dyn Fn(usize) -> R + Sync)) -> Vec<R> {
        // `collect` preserves index order, so downstream fixed-order
        // reductions see the same sequence as a serial run.
        self.pool
            .install(|| (0..count).into_par_iter().map(job).collect())
    }
}
