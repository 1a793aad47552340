//! Order-preserving parallel execution of independent trajectories.
//!
//! Each unit is computed in isolation (its own RNG stream, its own state);
//! results are reduced strictly in stream-id order so sums are bitwise
//! identical for any worker count.

use rayon::prelude::*;

/// Trajectories per parallel batch; bounds peak memory for large ensembles.
pub const BATCH: u64 = 4096;

pub fn map_ordered<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Computes `f(id)` for `id in 0..n` in parallel batches and feeds the
/// results to `fold` sequentially in id order.
pub fn fold_ordered<T, A, F, R>(n: u64, init: A, f: F, mut fold: R) -> A
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
    R: FnMut(&mut A, u64, T),
{
    let mut acc = init;
    let mut start = 0;
    while start < n {
        let end = (start + BATCH).min(n);
        let batch: Vec<T> = (start..end).into_par_iter().map(&f).collect();
        for (i, item) in batch.into_iter().enumerate() {
            fold(&mut acc, start + i as u64, item);
        }
        start = end;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_is_worker_count_independent() {
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                fold_ordered(10_000, 0.0f64, |i| ((i as f64) * 0.37).sin() * 1e-3, |acc, _, v| *acc += v)
            })
        };
        assert_eq!(run(1).to_bits(), run(3).to_bits());
        let ids = map_ordered(100, |i| i * 2);
        assert!(ids.iter().enumerate().all(|(i, &v)| v == 2 * i as u64));
    }
}
