//! Job execution helper. With the `parallel` feature (default) batch work is
//! distributed over a rayon pool sized by `jobs`; without it, or with
//! `jobs == 1`, the same closure runs sequentially. Output order always
//! matches input order, so results are schedule-independent.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving order. `jobs == 0` lets rayon pick the
/// thread count; `jobs == 1` forces the sequential path.
pub fn map_ordered<T, U, F>(items: &[T], jobs: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    #[cfg(feature = "parallel")]
    if jobs != 1 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            return pool.install(|| items.par_iter().map(&f).collect());
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order_for_any_job_count() {
        let items: Vec<u64> = (0..500).collect();
        let seq = map_ordered(&items, 1, |v| v * v);
        for jobs in [0, 2, 8] {
            assert_eq!(map_ordered(&items, jobs, |v| v * v), seq);
        }
    }
}
