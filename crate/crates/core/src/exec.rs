//! Serial or data-parallel evaluation of independent work items.
//!
//! Results are always returned in input order, so output never depends on scheduling.
//! Without the `parallel` feature, [`Execution::Parallel`] falls back to serial evaluation.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    /// Rayon pool; `threads: None` uses rayon's default (one per core).
    #[default]
    Parallel,
    /// Rayon pool capped at the given number of threads.
    Threads(usize),
}

impl Execution {
    pub fn map<T, R, F>(self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        match self {
            Execution::Serial => items.into_iter().map(f).collect(),
            Execution::Parallel => par_map(items, f, None),
            Execution::Threads(n) => par_map(items, f, Some(n.max(1))),
        }
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, R, F>(items: Vec<T>, f: F, threads: Option<usize>) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match threads {
        None => items.into_par_iter().map(f).collect(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(|| items.into_par_iter().map(f).collect()),
    }
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, R, F>(items: Vec<T>, f: F, _threads: Option<usize>) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    items.into_iter().map(f).collect()
}
