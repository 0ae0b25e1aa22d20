//! Ordered fan-out helpers.
//!
//! Every helper returns results in input order. Callers reduce those results
//! sequentially, so `Sequential` and `Parallel` produce bit-identical output.

/// How independent work items are scheduled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// `Parallel` only when the crate was built with rayon.
    pub fn effective(self) -> ExecMode {
        if cfg!(feature = "parallel") {
            self
        } else {
            ExecMode::Sequential
        }
    }
}

/// Maps `f` over `0..len`, collecting results in index order.
pub fn map_indexed<R, F>(mode: ExecMode, len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match mode.effective() {
        ExecMode::Sequential => (0..len).map(f).collect(),
        ExecMode::Parallel => parallel_map_indexed(len, f),
    }
}

/// Maps `f` over a slice, collecting results in slice order.
pub fn map_slice<I, R, F>(mode: ExecMode, items: &[I], f: F) -> Vec<R>
where
    I: Sync,
    R: Send,
    F: Fn(&I) -> R + Sync + Send,
{
    map_indexed(mode, items.len(), |i| f(&items[i]))
}

#[cfg(feature = "parallel")]
fn parallel_map_indexed<R, F>(len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    (0..len).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map_indexed<R, F>(len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..len).map(f).collect()
}

/// Configures the global worker pool. `threads == 1` forces sequential
/// scheduling everywhere; returns the mode callers should use.
pub fn configure_threads(threads: Option<usize>) -> ExecMode {
    match threads {
        Some(1) => ExecMode::Sequential,
        #[cfg(feature = "parallel")]
        Some(n) if n > 1 => {
            // Already-initialised pools are fine; the first configuration wins.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            ExecMode::Parallel
        }
        _ => ExecMode::Parallel.effective(),
    }
}
