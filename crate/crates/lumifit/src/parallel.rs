//! Row-parallel execution with reproducible results.
//!
//! Work is split by row index and collected back into row order, so any
//! reduction over the returned vector visits rows in the same order no matter
//! how many worker threads ran. The thread count comes from the
//! `LUMIFIT_THREADS` environment variable (default: hardware parallelism).

/// Number of worker threads to use.
pub fn thread_count() -> usize {
    if let Ok(v) = std::env::var("LUMIFIT_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                return n;
            }
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Apply `f` to every row index in `0..rows`, returning the results indexed
/// by row. `f` must be pure for reproducibility.
pub fn map_rows<T, F>(rows: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = thread_count().min(rows).max(1);
    if workers == 1 || cfg!(target_arch = "wasm32") {
        return (0..rows).map(f).collect();
    }
    run_parallel(rows, workers, &f)
}

#[cfg(not(target_arch = "wasm32"))]
fn run_parallel<T, F>(rows: usize, workers: usize, f: &F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    use std::sync::atomic::{AtomicUsize, Ordering};

    let next = AtomicUsize::new(0);
    let mut chunks: Vec<Vec<(usize, T)>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                let next = &next;
                scope.spawn(move || {
                    let mut local = Vec::new();
                    loop {
                        let row = next.fetch_add(1, Ordering::Relaxed);
                        if row >= rows {
                            break;
                        }
                        local.push((row, f(row)));
                    }
                    local
                })
            })
            .collect();
        chunks = handles.into_iter().map(|h| h.join().unwrap()).collect();
    });

    let mut slots: Vec<Option<T>> = (0..rows).map(|_| None).collect();
    for chunk in chunks {
        for (row, value) in chunk {
            slots[row] = Some(value);
        }
    }
    slots.into_iter().map(|s| s.unwrap()).collect()
}

#[cfg(target_arch = "wasm32")]
fn run_parallel<T, F>(rows: usize, _workers: usize, f: &F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    (0..rows).map(f).collect()
}
