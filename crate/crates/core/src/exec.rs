//! Trial execution, data-parallel by default.
//!
//! `run_trials` fans independent trial closures out over rayon when the
//! `parallel` feature is enabled (the default) and falls back to a plain
//! sequential loop otherwise. Because every trial derives its own random
//! streams from its index (see [`crate::rng::SeedTree`]) and results are
//! collected in index order, the output is bit-identical across feature
//! flags and thread counts. `run_trials_seq` is always available so the
//! bench suite can compare both paths in one binary.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Run `n` independent trials and collect results in index order.
pub fn run_trials<T, F>(n: usize, f: F) -> Vec<T>
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
        run_trials_seq(n, f)
    }
}

/// Sequential reference path; used by the benches and by tests that pin down
/// parallel/sequential equivalence.
pub fn run_trials_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
