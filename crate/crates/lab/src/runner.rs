use rayon::prelude::*;

use crate::LabError;

/// A private worker pool; results come back in index order.
pub struct Runner {
    pool: rayon::ThreadPool,
}

impl Runner {
    /// `threads = 0` uses one worker per available core.
    pub fn new(threads: usize) -> Result<Self, LabError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| LabError::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// `[f(0), f(1), …, f(n−1)]`, computed in parallel.
    pub fn map<T, F>(&self, n: u64, f: F) -> Result<Vec<T>, LabError>
    where
        T: Send,
        F: Fn(u64) -> Result<T, LabError> + Sync + Send,
    {
        self.pool
            .install(|| (0..n).into_par_iter().map(f).collect())
    }
}
