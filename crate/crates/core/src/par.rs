//! Thin dispatch layer over rayon.
//!
//! Every parallel map in the crate goes through [`map`], which preserves the
//! input order of its results. Work items never share mutable state, so the
//! output is identical for any worker count and for the sequential fallback
//! compiled without the `parallel` feature.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a data-parallel loop is executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    /// Plain iterator, regardless of enabled features.
    Sequential,
    /// Rayon on the current thread pool (sequential without the `parallel` feature).
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Ordered map over a slice.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Ordered map over `0..n` with a per-worker scratch value.
pub fn map_range_with<S, R, I, F>(exec: Execution, n: usize, init: I, f: F) -> Vec<R>
where
    R: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map_init(&init, &f).collect();
    }
    let _ = exec;
    let mut scratch = init();
    (0..n).map(|i| f(&mut scratch, i)).collect()
}

/// Runs `op` on a dedicated pool with `workers` threads (0 = rayon default).
pub fn with_workers<R: Send>(workers: usize, op: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if workers == 0 {
            return op();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(op),
            Err(err) => {
                log::warn!("could not build a {workers}-thread pool ({err}); using the global pool");
                op()
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        op()
    }
}

/// Number of threads a parallel map would use right now.
pub fn current_workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let items: Vec<usize> = (0..1000).collect();
        let seq = map(Execution::Sequential, &items, |x| x * x);
        let par = map(Execution::Parallel, &items, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(seq[31], 961);
    }

    #[test]
    fn scratch_map_matches_sequential() {
        let f = |buf: &mut Vec<f64>, i: usize| {
            buf.clear();
            buf.extend((0..=i).map(|k| k as f64));
            buf.iter().sum::<f64>()
        };
        let a = map_range_with(Execution::Sequential, 200, Vec::new, f);
        let b = with_workers(3, || map_range_with(Execution::Parallel, 200, Vec::new, f));
        assert_eq!(a, b);
    }
}
