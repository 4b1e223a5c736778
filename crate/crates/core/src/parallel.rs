//! Worker-pool plumbing. `PHANTOM_SYNC_THREADS` caps the pool size; results
//! are bitwise independent of the thread count because reductions always walk
//! fixed chunk boundaries in order.

use std::sync::OnceLock;

use rayon::prelude::*;
use rayon::ThreadPool;

static POOL: OnceLock<ThreadPool> = OnceLock::new();

fn configured_threads() -> usize {
    std::env::var("PHANTOM_SYNC_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// The process-wide worker pool, built on first use.
pub fn pool() -> &'static ThreadPool {
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(configured_threads())
            .build()
            .expect("worker pool construction")
    })
}

/// Maps `f` over `0..n` in parallel and returns results in index order.
pub fn ordered_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    pool().install(|| (0..n).into_par_iter().map(f).collect())
}
