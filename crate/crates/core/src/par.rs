//! Data-parallel map with a sequential fallback.
//!
//! Every Monte-Carlo loop in the crate goes through [`map_indexed`]. Work items
//! are identified by their index and derive their own RNG stream from it, so the
//! result vector is identical whichever [`Execution`] mode runs it.

use serde::{Deserialize, Serialize};

/// How independent work items are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    /// Rayon work-stealing pool. Falls back to sequential without the `parallel` feature.
    #[default]
    Parallel,
}

impl Execution {
    /// True when this build can actually run work items concurrently.
    pub fn is_parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Evaluates `f(0..n)` and returns results in index order.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(f).collect(),
        Execution::Parallel => parallel_map(n, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Sizes the global worker pool. `0` keeps the library default (one worker per core).
///
/// Returns `false` if the pool was already initialised or the build has no parallel support.
pub fn configure_workers(workers: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        if workers == 0 {
            return true;
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |i: usize| (i as f64).sqrt() * 3.0;
        assert_eq!(
            map_indexed(1000, Execution::Sequential, f),
            map_indexed(1000, Execution::Parallel, f)
        );
    }
}
