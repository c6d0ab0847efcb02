//! Data-parallel kernels with a sequential fallback.
//!
//! Every kernel here produces bitwise-identical results under both execution
//! modes: parallelism is only ever applied across independent outputs, never
//! inside a floating-point reduction, and argmax ties resolve to the lowest
//! position regardless of how work was split.
//!
//! Without the `parallel` feature, [`Execution::Parallel`] silently runs the
//! sequential path.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Smallest chunk handed to a rayon worker.
#[cfg(feature = "parallel")]
const MIN_PAR_LEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Whether this mode actually runs on the rayon pool in the current build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

fn better(x: Option<(f64, usize)>, y: Option<(f64, usize)>) -> Option<(f64, usize)> {
    match (x, y) {
        (None, r) | (r, None) => r,
        (Some(a), Some(b)) => {
            if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                Some(b)
            } else {
                Some(a)
            }
        }
    }
}

/// Position in `0..len` with the largest score; ties go to the lowest
/// position. NaN scores never win. Returns `None` when nothing is comparable.
pub fn argmax_first<F>(len: usize, exec: Execution, score: F) -> Option<usize>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let lift = |i: usize| {
        let s = score(i);
        (!s.is_nan()).then_some((s, i))
    };
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..len)
            .into_par_iter()
            .with_min_len(MIN_PAR_LEN)
            .map(lift)
            .reduce(|| None, better)
            .map(|(_, i)| i);
    }
    let _ = exec;
    (0..len).map(lift).fold(None, better).map(|(_, i)| i)
}

/// Applies `f(row_index, row)` to every `row_len`-sized row of `data`.
pub fn for_each_row_mut<F>(data: &mut [f64], row_len: usize, exec: Execution, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if row_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        data.par_chunks_mut(row_len)
            .with_min_len(MIN_PAR_LEN / 4)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    let _ = exec;
    data.chunks_mut(row_len)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// `(0..len).map(f).collect()`, in index order.
pub fn map_indices<T, F>(len: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..len)
            .into_par_iter()
            .with_min_len(MIN_PAR_LEN / 4)
            .map(f)
            .collect();
    }
    let _ = exec;
    (0..len).map(f).collect()
}
