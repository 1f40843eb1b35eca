//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) work fans out over rayon; without it,
//! or when [`Execution::Sequential`] is requested, the same closures run in
//! order on the calling thread. Results are always returned in index order,
//! so reductions over them are independent of scheduling.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon fan-out; `threads = None` uses the global pool.
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExecConfig {
    pub mode: Execution,
    pub threads: Option<usize>,
}

impl ExecConfig {
    pub fn sequential() -> Self {
        ExecConfig {
            mode: Execution::Sequential,
            threads: None,
        }
    }

    pub fn parallel(threads: Option<usize>) -> Self {
        ExecConfig {
            mode: Execution::Parallel,
            threads,
        }
    }

    /// `(0..n).map(f).collect()`, possibly in parallel.
    pub fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self.mode {
            Execution::Sequential => (0..n).map(f).collect(),
            Execution::Parallel => parallel_map(n, self.threads, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, threads: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;

    let run = || (0..n).into_par_iter().map(&f).collect::<Vec<T>>();
    match threads {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        },
        None => run(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, _threads: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Pairwise (cascade) sum with a fixed association order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (lo, hi) = values.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}
