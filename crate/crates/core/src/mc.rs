//! Deterministic parallel Monte Carlo driver.
//!
//! Work is cut into fixed-size chunks, each drawing from its own partition of
//! the parent stream. Chunk results are returned in chunk order, so totals do
//! not depend on the number of worker threads.

use rayon::prelude::*;

use crate::distributions::RngStream;

pub const CHUNK_SIZE: usize = 8192;

/// Runs `f(chunk_len, rng)` for every chunk of `n` items and returns the chunk
/// results in order.
pub fn run_chunks<T, F>(n: usize, rng: &RngStream, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut RngStream) -> T + Sync,
{
    let n_chunks = n.div_ceil(CHUNK_SIZE);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK_SIZE.min(n - c * CHUNK_SIZE);
            let mut local = rng.partition(c as u64);
            f(len, &mut local)
        })
        .collect()
}

/// `n` independent draws of `sample`, in a thread-count independent order.
pub fn sample_vec<F>(n: usize, rng: &RngStream, sample: F) -> Vec<f64>
where
    F: Fn(&mut RngStream) -> f64 + Sync,
{
    run_chunks(n, rng, |len, r| (0..len).map(|_| sample(r)).collect::<Vec<_>>())
        .into_iter()
        .flatten()
        .collect()
}
