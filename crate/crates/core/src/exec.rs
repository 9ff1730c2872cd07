//! Execution strategy for data-parallel loops.
//!
//! With the `parallel` feature, [`Execution::Parallel`] fans work out over a
//! rayon pool; without it every loop runs sequentially. Results are always
//! collected in index order, so the strategy never changes an output.

/// How independent jobs are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// `jobs == 0` uses rayon's global pool.
    Parallel { jobs: usize },
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel { jobs: 0 }
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn with_jobs(jobs: usize) -> Self {
        if jobs == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { jobs }
        }
    }

    /// Maps `f` over `0..n`, returning results in index order.
    pub fn map_indexed<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel { jobs } => {
                use rayon::prelude::*;
                if jobs == 0 {
                    return (0..n).into_par_iter().map(f).collect();
                }
                match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
                    Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
                    Err(_) => (0..n).map(f).collect(),
                }
            }
            #[cfg(not(feature = "parallel"))]
            Execution::Parallel { .. } => (0..n).map(f).collect(),
        }
    }
}
