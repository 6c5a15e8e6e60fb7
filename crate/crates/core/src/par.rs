//! Thin wrappers that switch between rayon and plain iteration depending
//! on the `parallel` feature. Every helper preserves element order, so
//! both builds produce bit-identical results.

/// Map `f` over `0..n`, collecting results in index order.
pub(crate) fn map_indexed<U, F>(n: usize, threshold: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if n >= threshold {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = threshold;
    (0..n).map(f).collect()
}

/// Split `data` into `chunk`-sized pieces and run `f(index, piece)` on
/// each. Chunks are disjoint, so the parallel path writes without
/// synchronisation. `min_len` keeps tiny workloads off the thread pool.
pub(crate) fn for_each_chunk_mut<F>(data: &mut [f64], chunk: usize, min_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    debug_assert!(chunk > 0 && data.len() % chunk == 0);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if data.len() >= min_len && data.len() / chunk >= 2 {
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
    }
    let _ = min_len;
    for (i, c) in data.chunks_mut(chunk).enumerate() {
        f(i, c);
    }
}
