//! Job execution helpers.
//!
//! Folds, grid points, and per-session decodes are independent pure
//! functions of their inputs. `run_jobs` evaluates them with rayon when the
//! `parallel` feature is enabled and sequentially otherwise; results come
//! back ordered by job index, so the merge is deterministic regardless of
//! completion order. `run_jobs_seq` is always sequential and exists so the
//! bench suite can compare the two paths in a single build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluate `f(0..n)` and collect the results in index order.
pub fn run_jobs<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential reference implementation of [`run_jobs`].
pub fn run_jobs_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
