//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) [`Execution::Parallel`] runs on
//! the rayon global pool. Without it, both variants run sequentially, so
//! callers never need their own `cfg` switches.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How an inner loop is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when this build can actually run loops in parallel.
    pub const fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    /// `items.iter().map(f).collect()`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    /// `(0..n).map(f).collect()`, preserving order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }

    /// Apply `f` to every element in place.
    pub fn for_each_mut<T, F>(self, items: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x)),
            _ => items.iter_mut().enumerate().for_each(|(i, x)| f(i, x)),
        }
    }

    /// Index of the maximum of `key(i)` over `0..n`; lower `tie(i, j)` wins
    /// on equal keys. Returns `None` for `n == 0` or when `key` yields `None`
    /// everywhere.
    pub fn argmax_by<K, F, T>(self, n: usize, key: F, tie: T) -> Option<usize>
    where
        K: PartialOrd + Copy + Send,
        F: Fn(usize) -> Option<K> + Sync + Send,
        T: Fn(usize, usize) -> std::cmp::Ordering + Sync + Send,
    {
        let better = |a: (usize, K), b: (usize, K)| -> (usize, K) {
            match a.1.partial_cmp(&b.1) {
                Some(std::cmp::Ordering::Greater) => a,
                Some(std::cmp::Ordering::Less) => b,
                _ => {
                    if tie(a.0, b.0) == std::cmp::Ordering::Greater {
                        b
                    } else {
                        a
                    }
                }
            }
        };
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..n)
                .into_par_iter()
                .filter_map(|i| key(i).map(|k| (i, k)))
                .reduce_with(better)
                .map(|(i, _)| i),
            _ => (0..n)
                .filter_map(|i| key(i).map(|k| (i, k)))
                .reduce(better)
                .map(|(i, _)| i),
        }
    }
}
