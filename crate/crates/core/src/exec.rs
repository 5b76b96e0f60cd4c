//! Ordered map over independent work items, data-parallel when the
//! `parallel` feature is enabled.
//!
//! Results always come back in input order and every item receives its
//! index, so callers derive per-item seeds from the index and output is
//! identical for any worker count.

/// `workers == 0` means "all available cores"; `1` forces the sequential
/// path even when the `parallel` feature is on.
pub fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers != 1 && items.len() > 1 {
        use rayon::prelude::*;
        let run = || items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
        if workers == 0 {
            return run();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => return pool.install(run),
            Err(e) => log::warn!("could not start {workers} workers ({e}); running sequentially"),
        }
    }
    #[cfg(not(feature = "parallel"))]
    if workers > 1 {
        log::debug!("built without the `parallel` feature; ignoring workers={workers}");
    }
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Number of workers `par_map` would use.
pub fn effective_workers(workers: usize) -> usize {
    #[cfg(feature = "parallel")]
    {
        if workers == 0 {
            rayon::current_num_threads()
        } else {
            workers
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_for_any_worker_count() {
        let items: Vec<u64> = (0..50).collect();
        let seq = par_map(&items, 1, |i, x| x * 3 + i as u64);
        for w in [0, 2, 4] {
            assert_eq!(par_map(&items, w, |i, x| x * 3 + i as u64), seq);
        }
    }

    #[test]
    fn empty_input() {
        let items: Vec<u8> = vec![];
        assert!(par_map(&items, 0, |_, x| *x).is_empty());
    }
}
