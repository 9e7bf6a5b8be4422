//! Parallel/serial execution switch.
//!
//! With the `parallel` feature (default) the data-parallel loops run on
//! rayon; without it, or with [`Exec::Serial`], they run on the calling
//! thread. Every reduction is order-independent so both modes produce
//! bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Serial,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Maps `f` over `0..n` and collects results in index order.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Maps `f` over a slice and collects results in order.
    pub fn map_slice<S, T, F>(self, items: &[S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&S) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Applies `f` to each element of `items` in place.
    pub fn for_each_mut<S, F>(self, items: &mut [S], f: F)
    where
        S: Send,
        F: Fn(usize, &mut S) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            items.par_iter_mut().enumerate().for_each(|(i, s)| f(i, s));
            return;
        }
        items.iter_mut().enumerate().for_each(|(i, s)| f(i, s));
    }
}

/// Configures the global rayon pool from `DQCOMP_THREADS`, if set.
pub fn init_thread_pool_from_env() {
    #[cfg(feature = "parallel")]
    if let Some(n) = std::env::var("DQCOMP_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // Already-initialized pools are left as they are.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
