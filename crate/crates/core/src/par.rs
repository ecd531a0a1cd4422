//! Chunked map over index ranges, parallel when the `parallel` feature is on.
//! Results always come back in chunk order so reductions are reproducible.

pub(crate) fn map_chunks<T, F>(total: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = total.div_ceil(chunk);
    let range_of = |c: usize| c * chunk..((c + 1) * chunk).min(total);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n_chunks).into_par_iter().map(|c| f(range_of(c))).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_chunks).map(|c| f(range_of(c))).collect()
    }
}
