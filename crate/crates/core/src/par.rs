//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the `Parallel` mode fans work out
//! over the rayon pool; without it every mode runs on the calling thread.
//! Results are always returned in index order and reductions are done in
//! fixed-size chunks summed in chunk order, so outputs are bit-identical
//! across modes and thread counts.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution mode for batched kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// Chunk length used by [`chunked_sum`]; fixed so that reductions do not
/// depend on how many workers are available.
pub const REDUCE_CHUNK: usize = 256;

/// Evaluates `f(i)` for `i in 0..n`, returning results in index order.
pub fn map_range<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

/// Fallible variant of [`map_range`]; the error with the lowest index wins.
pub fn try_map_range<T, E, F>(exec: Exec, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_range(exec, n, f).into_iter().collect()
}

/// Sums per-item vectors of length `width` produced by `f(i, out)` for
/// `i in 0..n`. `f` accumulates into `out`. Items are grouped into chunks of
/// [`REDUCE_CHUNK`]; chunk partials are added in chunk order.
pub fn chunked_sum<F>(exec: Exec, n: usize, width: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let chunks = n.div_ceil(REDUCE_CHUNK);
    let partials = map_range(exec, chunks, |c| {
        let mut acc = vec![0.0; width];
        let start = c * REDUCE_CHUNK;
        let end = (start + REDUCE_CHUNK).min(n);
        for i in start..end {
            f(i, &mut acc);
        }
        acc
    });
    let mut total = vec![0.0; width];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}
