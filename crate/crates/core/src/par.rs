//! Thin data-parallel layer. With the `parallel` feature the helpers run on
//! the rayon pool; without it they are plain loops. Every reduction is split
//! into fixed-size chunks whose partial results are combined in chunk order,
//! so results are bit-identical whichever path is compiled in and however
//! many threads the pool has.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of values per partial sum in chunked reductions.
pub const REDUCE_CHUNK: usize = 1 << 14;

/// Applies `f` to each index in `0..n` and collects results in index order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
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

/// Applies `f` to each element of `items` and collects results in order.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Runs `f(chunk_index, chunk)` over consecutive `chunk`-sized pieces of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Maps each `chunk`-sized piece of `data` to a partial result, in order.
pub fn map_chunks<T, R, F>(data: &[T], chunk: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks(chunk).map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks(chunk).map(f).collect()
    }
}

/// Deterministic chunked sum of `f(x)` over `data`.
pub fn sum_by<F>(data: &[f64], f: F) -> f64
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    map_chunks(data, REDUCE_CHUNK, |c| c.iter().map(|&x| f(x)).sum::<f64>())
        .into_iter()
        .sum()
}

/// Deterministic chunked maximum of `|x|`.
pub fn max_abs(data: &[f64]) -> f64 {
    map_chunks(data, REDUCE_CHUNK, |c| c.iter().fold(0.0f64, |m, &x| m.max(x.abs())))
        .into_iter()
        .fold(0.0, f64::max)
}
