//! Order-preserving parallel map over index ranges.
//!
//! With the `parallel` feature the range is split into `workers` contiguous chunks that run on
//! rayon; each chunk owns one piece of worker state built by `init`. Without the feature, or with
//! a single worker, everything runs in the calling thread. Results always come back in index
//! order, so callers that derive all randomness from the index are deterministic regardless of
//! the worker count.

use std::ops::Range;

/// Resolves a requested worker count; `0` means one per available thread.
pub fn effective_workers(requested: usize) -> usize {
    if requested > 0 {
        return requested;
    }
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

fn chunks(n: usize, workers: usize) -> Vec<Range<usize>> {
    let workers = workers.clamp(1, n.max(1));
    let base = n / workers;
    let extra = n % workers;
    let mut start = 0;
    (0..workers)
        .map(|w| {
            let len = base + usize::from(w < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Maps `f` over `0..n` with per-worker state. Fails fast on the first `init` error.
pub fn map_with_state<S, T, E, I, F>(n: usize, workers: usize, init: I, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    I: Fn(usize) -> Result<S, E> + Sync,
    F: Fn(&mut S, usize) -> T + Sync,
{
    let ranges = chunks(n, effective_workers(workers));
    let run = |(w, r): (usize, Range<usize>)| -> Result<Vec<T>, E> {
        let mut state = init(w)?;
        Ok(r.map(|i| f(&mut state, i)).collect())
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<Vec<T>, E>> = if ranges.len() > 1 {
        use rayon::prelude::*;
        ranges.into_par_iter().enumerate().map(run).collect()
    } else {
        ranges.into_iter().enumerate().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<Vec<T>, E>> = ranges.into_iter().enumerate().map(run).collect();

    let mut out = Vec::with_capacity(n);
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// Stateless variant of [`map_with_state`].
pub fn map_range<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    map_with_state(n, workers, |_| Ok::<(), ()>(()), |_, i| f(i)).unwrap_or_default()
}

/// Maps `f` over long-lived items (for example environments), in parallel when enabled.
pub fn map_slice_mut<S, T, F>(items: &mut [S], f: F) -> Vec<T>
where
    S: Send,
    T: Send,
    F: Fn(usize, &mut S) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter_mut().enumerate().map(|(i, s)| f(i, s)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter_mut().enumerate().map(|(i, s)| f(i, s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunking_covers_range() {
        for n in [0, 1, 5, 17] {
            for w in 1..6 {
                let c = chunks(n, w);
                let flat: Vec<usize> = c.into_iter().flatten().collect();
                assert_eq!(flat, (0..n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn order_is_preserved_for_any_worker_count() {
        let expected: Vec<usize> = (0..100).map(|i| i * i).collect();
        for w in [1, 2, 3, 8] {
            assert_eq!(map_range(100, w, |i| i * i), expected);
        }
    }

    #[test]
    fn slice_map_keeps_order_and_mutates() {
        let mut v: Vec<usize> = (0..20).collect();
        let out = map_slice_mut(&mut v, |i, x| {
            *x += 1;
            i * 2
        });
        assert_eq!(out, (0..20).map(|i| i * 2).collect::<Vec<_>>());
        assert_eq!(v, (1..21).collect::<Vec<_>>());
    }

    #[test]
    fn init_errors_propagate() {
        let r: Result<Vec<usize>, &str> = map_with_state(10, 2, |w| if w == 1 { Err("boom") } else { Ok(()) }, |_, i| i);
        assert_eq!(r, Err("boom"));
    }
}
