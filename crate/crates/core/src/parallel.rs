//! Data-parallel execution with a sequential fallback.
//!
//! With the `parallel` feature (default) indexed maps are spread over the
//! ambient rayon pool. Without it, or inside [`run_sequential`], they run on
//! the calling thread. Every map collects in index order, so results never
//! depend on scheduling or on the number of workers.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with every data-parallel map on this thread forced sequential.
pub fn run_sequential<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            FORCE_SEQUENTIAL.with(|flag| flag.set(self.0));
        }
    }
    let _restore = Restore(FORCE_SEQUENTIAL.with(|flag| flag.replace(true)));
    f()
}

/// Runs `f` on a dedicated pool of `workers` threads. One worker means the
/// plain sequential path.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers <= 1 {
        return run_sequential(f);
    }
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(f),
            Err(_) => run_sequential(f),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        f()
    }
}

/// Number of threads a map would use right now.
pub fn current_workers() -> usize {
    if is_sequential() {
        return 1;
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

fn is_sequential() -> bool {
    !cfg!(feature = "parallel") || FORCE_SEQUENTIAL.with(Cell::get)
}

/// `(0..n).map(f).collect()`, in parallel when enabled.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if is_sequential() {
        return (0..n).map(f).collect();
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        unreachable!()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let expected: Vec<usize> = (0..1000).map(|k| k * k).collect();
        assert_eq!(map_indexed(1000, |k| k * k), expected);
        assert_eq!(with_workers(4, || map_indexed(1000, |k| k * k)), expected);
        assert_eq!(run_sequential(|| map_indexed(1000, |k| k * k)), expected);
    }

    #[test]
    fn sequential_scope_is_restored() {
        run_sequential(|| assert_eq!(current_workers(), 1));
        assert!(!FORCE_SEQUENTIAL.with(Cell::get));
        assert_eq!(with_workers(1, current_workers), 1);
    }
}
