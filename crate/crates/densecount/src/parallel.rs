//! Minimal worker pool for per-image batch work.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Worker count: `DENSECOUNT_THREADS` caps the machine's available
/// parallelism when set to a positive integer (other values are
/// ignored), and no more threads than items are ever spawned.
pub fn thread_budget(items: usize) -> usize {
    let available = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let cap = std::env::var("DENSECOUNT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n >= 1)
        .unwrap_or(available);
    available.min(cap).min(items).max(1)
}

/// Applies `f` to every item on a bounded pool and returns the results in
/// input order. Items are claimed through a shared counter, so scheduling
/// never affects the output.
pub fn map_parallel<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let threads = thread_budget(items.len());
    if threads <= 1 || items.len() <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(items.len()));
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= items.len() {
                    break;
                }
                let value = f(index, &items[index]);
                results.lock().expect("worker panicked").push((index, value));
            });
        }
    });
    let mut indexed = results.into_inner().expect("worker panicked");
    indexed.sort_unstable_by_key(|(i, _)| *i);
    indexed.into_iter().map(|(_, v)| v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_input_order() {
        let items: Vec<usize> = (0..503).collect();
        let out = map_parallel(&items, |i, v| {
            assert_eq!(i, *v);
            v * 2
        });
        assert_eq!(out, items.iter().map(|v| v * 2).collect::<Vec<_>>());
    }

    #[test]
    fn budget_is_at_least_one() {
        assert_eq!(thread_budget(0), 1);
        assert!(thread_budget(8) >= 1);
    }
}
