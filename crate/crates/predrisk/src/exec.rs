//! Deterministic fan-out for replicate loops.
//!
//! Work items are indexed; each index derives its own RNG substream from the
//! root seed, and results are collected in index order before any reduction.
//! The parallel and sequential paths therefore produce bit-identical output,
//! and the parallel path is independent of the worker count.

/// Map `f` over `0..n`, collecting results in index order.
///
/// With the `parallel` feature this fans out over the rayon thread pool;
/// without it (or via [`map_indexed_seq`]) it runs on the current thread.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Sequential reference path; always available, used by the benches to
/// compare against the rayon path.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::pairwise_sum;
    use rand::Rng;
    use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

    fn draw(seed: u64, idx: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(idx as u64);
        rng.random::<f64>()
    }

    #[test]
    fn parallel_and_sequential_paths_are_bit_identical() {
        let a = map_indexed(10_000, |i| draw(7, i));
        let b = map_indexed_seq(10_000, |i| draw(7, i));
        assert_eq!(a, b);
        assert_eq!(pairwise_sum(&a).to_bits(), pairwise_sum(&b).to_bits());
    }
}
