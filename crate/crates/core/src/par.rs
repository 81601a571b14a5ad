//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) the helpers dispatch to rayon;
//! without it, or inside [`sequential`], they run on the calling thread. All
//! reductions are chunked with a fixed chunk size and combined in index order,
//! so results are bit-identical whichever path runs and however many threads
//! the pool has.

use std::cell::Cell;

/// Chunk length used by the reductions. Fixed so that the summation order
/// does not depend on the thread count.
pub const REDUCE_CHUNK: usize = 4096;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with every helper in this module forced onto the calling thread.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|c| c.set(prev));
    out
}

/// Whether helpers called from this thread will fan out to the rayon pool.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(|c| c.get())
}

/// Caps the global pool at `threads` workers. Only the first call has any
/// effect; later calls (and calls without the `parallel` feature) return
/// `false`.
pub fn init_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

/// `(0..n).map(f).collect()`, in parallel when enabled. Output order is index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Calls `f(chunk_index, chunk)` on consecutive `chunk_len`-sized pieces of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk_len = chunk_len.max(1);
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Deterministic `Σ_{i<n} f(i)`.
pub fn sum_by<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(REDUCE_CHUNK);
    let partial = map_indexed(chunks, |c| {
        let lo = c * REDUCE_CHUNK;
        let hi = (lo + REDUCE_CHUNK).min(n);
        (lo..hi).map(&f).sum::<f64>()
    });
    partial.into_iter().sum()
}

/// Deterministic `(Σ f(i), Σ f(i)²)`, for a mean and a standard error in one pass.
pub fn sum_and_sq_by<F>(n: usize, f: F) -> (f64, f64)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(REDUCE_CHUNK);
    let partial = map_indexed(chunks, |c| {
        let lo = c * REDUCE_CHUNK;
        let hi = (lo + REDUCE_CHUNK).min(n);
        (lo..hi).fold((0.0, 0.0), |(s, q), i| {
            let v = f(i);
            (s + v, q + v * v)
        })
    });
    partial
        .into_iter()
        .fold((0.0, 0.0), |(s, q), (a, b)| (s + a, q + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_match_between_modes() {
        let f = |i: usize| ((i as f64) * 0.37).sin() * 1e3 + 1e-7 * i as f64;
        let n = 3 * REDUCE_CHUNK + 17;
        let par = sum_by(n, f);
        let seq = sequential(|| sum_by(n, f));
        assert_eq!(par.to_bits(), seq.to_bits());
        let (s, q) = sum_and_sq_by(n, f);
        let (s2, q2) = sequential(|| sum_and_sq_by(n, f));
        assert_eq!((s.to_bits(), q.to_bits()), (s2.to_bits(), q2.to_bits()));
    }

    #[test]
    fn sequential_scope_restores_flag() {
        let before = is_parallel();
        sequential(|| assert!(!is_parallel()));
        assert_eq!(before, is_parallel());
    }

    #[test]
    fn chunked_for_each_visits_everything() {
        let mut v = vec![0usize; 1000];
        for_each_chunk_mut(&mut v, 64, |c, chunk| {
            for (k, x) in chunk.iter_mut().enumerate() {
                *x = c * 64 + k;
            }
        });
        assert!(v.iter().enumerate().all(|(i, &x)| i == x));
    }
}
