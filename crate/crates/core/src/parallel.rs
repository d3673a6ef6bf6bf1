//! Deterministic chunked parallelism for assembly loops.
//!
//! Cells are processed in fixed chunks; each chunk accumulates locally and
//! the chunks are merged in index order. The result is bitwise independent
//! of the worker count, so trajectories reproduce across thread settings.

use std::sync::atomic::{AtomicUsize, Ordering};

/// Fixed chunk length. Determinism relies on this being independent of the
/// number of workers.
const CHUNK: usize = 1024;

/// Environment variable controlling the worker count.
pub const THREADS_ENV: &str = "CARDIOFLOW_THREADS";

pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Maps `work(range)` over `0..n` in fixed chunks and returns the per-chunk
/// results in chunk order regardless of which worker ran them.
pub fn chunked_map_reduce<A, W>(n: usize, work: W) -> Vec<A>
where
    A: Send,
    W: Fn(std::ops::Range<usize>) -> A + Sync,
{
    let num_chunks = n.div_ceil(CHUNK);
    if num_chunks == 0 {
        return Vec::new();
    }
    let workers = worker_count().min(num_chunks);
    if workers <= 1 || num_chunks == 1 {
        return (0..num_chunks)
            .map(|c| work(c * CHUNK..((c + 1) * CHUNK).min(n)))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let mut tagged: Vec<(usize, A)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                let next = &next;
                let work = &work;
                scope.spawn(move || {
                    let mut local = Vec::new();
                    loop {
                        let c = next.fetch_add(1, Ordering::Relaxed);
                        if c >= num_chunks {
                            break;
                        }
                        let range = c * CHUNK..((c + 1) * CHUNK).min(n);
                        local.push((c, work(range)));
                    }
                    local
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("assembly worker panicked"))
            .collect()
    });
    tagged.sort_by_key(|(c, _)| *c);
    tagged.into_iter().map(|(_, a)| a).collect()
}
