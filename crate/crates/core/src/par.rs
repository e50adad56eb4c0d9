//! Data-parallel element loops.
//!
//! With the `parallel` feature these helpers run on rayon; without it they
//! are plain sequential iterators. Outputs are always collected in index
//! order, so callers that merge results sequentially get bitwise identical
//! results for any worker count.

use std::ops::Range;

use crate::error::Result;

/// Environment variable capping the number of workers.
pub const THREADS_ENV: &str = "FDLM_THREADS";

/// Block size used when splitting element loops into work items.
pub const CHUNK: usize = 512;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `(0..n).map(f).collect()`, in parallel when enabled.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
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

/// Fallible [`map_range`]; the first error in index order wins.
pub fn try_map_range<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    map_range(n, f).into_iter().collect()
}

/// Applies `f` to consecutive blocks `[k·chunk, (k+1)·chunk) ∩ [0, n)`.
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let blocks = n.div_ceil(chunk);
    map_range(blocks, |b| f(b * chunk..((b + 1) * chunk).min(n)))
}

/// Fallible [`map_chunks`].
pub fn try_map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Range<usize>) -> Result<T> + Sync + Send,
{
    map_chunks(n, chunk, f).into_iter().collect()
}

/// Worker count requested through `explicit` or [`THREADS_ENV`].
pub fn requested_threads(explicit: Option<usize>) -> Option<usize> {
    explicit.or_else(|| {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
    })
}

/// Configures the global worker pool. Only the first call has an effect.
pub fn init_threads(explicit: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = requested_threads(explicit) {
        // a second initialisation is a no-op
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = explicit;
}

/// Runs `op` with exactly `n` workers (sequentially for `n == 1` or
/// without the `parallel` feature).
pub fn with_threads<R: Send, F: FnOnce() -> R + Send>(n: usize, op: F) -> R {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(op),
            Err(_) => op(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        op()
    }
}

/// Number of workers the current context would use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
