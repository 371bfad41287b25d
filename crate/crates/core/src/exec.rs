//! Index-parallel map with a sequential fallback.
//!
//! Results always come back in index order, so any reduction done by the
//! caller over the returned vector is independent of scheduling. Without
//! the `parallel` feature every mode runs on the calling thread.

#[cfg(feature = "parallel")]
use crate::error::Error;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon's global pool.
    #[default]
    Parallel,
    /// A dedicated rayon pool with this many threads.
    Workers(usize),
}

impl Execution {
    pub fn from_workers(workers: Option<usize>) -> Self {
        match workers {
            None => Execution::Parallel,
            Some(0) | Some(1) => Execution::Sequential,
            Some(k) => Execution::Workers(k),
        }
    }
}

/// Evaluates `f(0), …, f(len − 1)` and returns them in index order.
pub fn map_indexed<T, F>(exec: Execution, len: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => Ok((0..len).map(f).collect()),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            Ok((0..len).into_par_iter().map(f).collect())
        }
        #[cfg(feature = "parallel")]
        Execution::Workers(k) => {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("cannot start {k} worker threads: {e}")))?;
            Ok(pool.install(|| (0..len).into_par_iter().map(f).collect()))
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel | Execution::Workers(_) => Ok((0..len).map(f).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        for exec in [Execution::Sequential, Execution::Parallel, Execution::Workers(3)] {
            let v = map_indexed(exec, 1000, |i| i * i).unwrap();
            assert!(v.iter().enumerate().all(|(i, &x)| x == i * i));
        }
    }

    #[test]
    fn worker_mapping() {
        assert_eq!(Execution::from_workers(None), Execution::Parallel);
        assert_eq!(Execution::from_workers(Some(1)), Execution::Sequential);
        assert_eq!(Execution::from_workers(Some(8)), Execution::Workers(8));
    }
}
