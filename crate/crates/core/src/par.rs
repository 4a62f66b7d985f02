//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over the rayon pool;
//! without it everything runs on the calling thread. Results are always
//! returned in input order, so both paths produce identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a data-parallel loop is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when the `parallel` feature is disabled.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_with(Execution::default(), items, f)
}

pub fn map_with<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec.is_parallel() {
            return items.par_iter().map(f).collect();
        }
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Maps over `0..n`, preserving order.
pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = exec;
    (0..n).map(f).collect()
}
