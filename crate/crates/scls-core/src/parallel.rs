//! Data-parallel replicate evaluation.
//!
//! Permutation replicates, bootstrap resamples and Monte-Carlo repetitions
//! are all "run f(r) for r in 0..n, collect in order" workloads. The helpers
//! here run them on rayon when the `parallel` feature is enabled (the
//! default) and fall back to a plain loop otherwise. Output order is the
//! replicate index order in both cases, so results never depend on the
//! worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluate `f(0..n)` and collect the results in index order.
#[cfg(feature = "parallel")]
pub fn run_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    run_indexed_sequential(n, f)
}

/// Sequential reference path. Always available; the benches compare it
/// against the rayon path on identical workloads.
pub fn run_indexed_sequential<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
