//! Thread-pool batch execution for training.

use rayon::prelude::*;
use rayon::ThreadPool;
use shapecomp_core::vae::{BatchExecutor, SampleJob, SampleResult, Sequential};
use shapecomp_core::Result as CoreResult;

use crate::error::{Error, Result};

/// Evaluates the samples of a batch on a rayon pool. Results come back in
/// job order, so the merged gradient does not depend on the worker count.
pub struct Rayon {
    pool: ThreadPool,
}

impl Rayon {
    pub fn new(workers: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Usage(format!("cannot start {workers} workers: {e}")))?;
        Ok(Self { pool })
    }

    pub fn pool(&self) -> &ThreadPool {
        &self.pool
    }
}

impl BatchExecutor for Rayon {
    fn run(
        &self,
        jobs: &[SampleJob],
        work: &(dyn Fn(&SampleJob) -> CoreResult<SampleResult> + Sync),
    ) -> Vec<CoreResult<SampleResult>> {
        self.pool.install(|| jobs.par_iter().map(work).collect())
    }
}

/// Sequential for one worker, a rayon pool otherwise.
pub fn executor(workers: usize) -> Result<Box<dyn BatchExecutor>> {
    match workers {
        0 => Err(Error::Usage("--workers must be at least 1".into())),
        1 => Ok(Box::new(Sequential)),
        n => Ok(Box::new(Rayon::new(n)?)),
    }
}

/// Maps `f` over `items` on `workers` threads, keeping input order.
pub fn map_ordered<T: Sync, R: Send>(workers: usize, items: &[T], f: impl Fn(&T) -> R + Sync) -> Result<Vec<R>> {
    if workers <= 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = Rayon::new(workers)?;
    Ok(pool.pool().install(|| items.par_iter().map(&f).collect()))
}
