//! Independent-task fan-out. With the `parallel` feature (default) tasks run
//! on the rayon pool; without it they run in order on the calling thread.
//! Results are always returned in input order, so the reduction downstream
//! is identical either way.

/// Applies `f` to every item, in parallel when the `parallel` feature is on.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_sequential(items, f)
    }
}

/// Sequential reference path, always available.
pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Runs `op` on a pool of `workers` threads (0 = rayon default). Without
/// the `parallel` feature this just calls `op`.
pub fn with_workers<R: Send>(workers: usize, op: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if workers == 0 {
            return op();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(op),
            Err(_) => op(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        op()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let items: Vec<u64> = (0..257).collect();
        let par = map(&items, |x| x * x);
        let seq = map_sequential(&items, |x| x * x);
        assert_eq!(par, seq);
        let pooled = with_workers(3, || map(&items, |x| x + 1));
        assert_eq!(pooled[256], 257);
    }
}
