//! Order-preserving data-parallel helpers.
//!
//! With the `parallel` feature the per-index work runs on the rayon pool;
//! without it, or inside [`sequential`], it runs on the calling thread. Both
//! paths return results in index order, so any reduction folded over the
//! output is bitwise identical regardless of thread count.

#[cfg(feature = "parallel")]
use std::cell::Cell;

#[cfg(feature = "parallel")]
thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with every [`map_indexed`] call on this thread forced onto the
/// sequential path.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    #[cfg(feature = "parallel")]
    {
        let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
        let out = f();
        FORCE_SEQUENTIAL.with(|c| c.set(prev));
        out
    }
    #[cfg(not(feature = "parallel"))]
    {
        f()
    }
}

/// True when [`map_indexed`] will dispatch to rayon.
pub fn is_parallel() -> bool {
    #[cfg(feature = "parallel")]
    {
        !FORCE_SEQUENTIAL.with(|c| c.get())
    }
    #[cfg(not(feature = "parallel"))]
    {
        false
    }
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Maps over a slice, preserving order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_indexed(items.len(), |i| f(&items[i]))
}
