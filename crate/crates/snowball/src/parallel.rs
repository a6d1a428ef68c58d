//! Thread-pool executor for the scoring loops.

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};
use snowball_core::ScoreExecutor;

use crate::error::{Error, Result};

/// Fans scoring work out over a dedicated pool. Results come back in index
/// order, so output does not depend on the worker count.
pub struct Pool {
    pool: ThreadPool,
}

impl Pool {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::Usage("--workers must be at least 1".into()));
        }
        let pool = ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Usage(format!("cannot start {workers} workers: {e}")))?;
        Ok(Pool { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl ScoreExecutor for Pool {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}
