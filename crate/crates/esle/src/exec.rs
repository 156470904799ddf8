//! Thread pool behind `--threads`. Results come back in index order, so
//! outputs do not depend on the number of threads.

use esle_core::nnet::Executor;
use rayon::prelude::*;

use crate::{Error, Result};

pub struct Pool {
    pool: Option<rayon::ThreadPool>,
}

impl Pool {
    /// One thread runs jobs inline on the caller.
    pub fn new(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(Error::Invalid("--threads must be at least 1".into()));
        }
        let pool = if threads == 1 {
            None
        } else {
            let p = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
            Some(p)
        };
        Ok(Self { pool })
    }

    pub fn sequential() -> Self {
        Self { pool: None }
    }

    pub fn threads(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }

    /// Runs fallible jobs and returns the first error by index.
    pub fn try_map<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }
}

impl Executor for Pool {
    fn map<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match &self.pool {
            None => (0..n).map(f).collect(),
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}
