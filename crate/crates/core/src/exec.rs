//! Data-parallel execution helpers.
//!
//! Every parallel site in this crate maps a pure function over an index range
//! and writes one output slot per index. Each slot is computed with a fixed
//! internal summation order, so the result is bit-identical whether the map
//! runs on one thread or many. Reductions over the collected slots always
//! happen sequentially in index order.
//!
//! With the `parallel` feature (default) the maps run on rayon; without it
//! they fall back to plain sequential iteration. [`map_indexed_serial`] is the
//! sequential reference path and is always compiled, so tests and benchmarks
//! can compare the two directly.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Configure the global thread pool size. No-op without the `parallel`
/// feature, and silently ignored if a pool was already installed.
pub fn configure_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
    }
}

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indexed_serial(n, f)
}

/// Sequential reference implementation of [`map_indexed`].
pub fn map_indexed_serial<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_serial_agree_bitwise() {
        let f = |i: usize| ((i as f64) * 0.37).sin() * ((i as f64) + 1.0).ln();
        let a = map_indexed(1000, f);
        let b = map_indexed_serial(1000, f);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
