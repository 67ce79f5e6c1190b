//! Serial / data-parallel execution switch.
//!
//! With the `parallel` feature, [`ExecMode::Parallel`] maps over a rayon pool;
//! without it every mode runs sequentially. Both paths preserve input order,
//! so callers see identical results either way.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Serial,
    /// Use the ambient rayon pool (or a dedicated pool, see [`with_workers`]).
    #[default]
    Parallel,
}

impl ExecMode {
    pub fn for_workers(workers: Option<usize>) -> Self {
        match workers {
            Some(1) => ExecMode::Serial,
            _ => ExecMode::Parallel,
        }
    }
}

/// Order-preserving map over `0..n`.
pub fn map_indexed<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        ExecMode::Serial => (0..n).map(f).collect(),
        ExecMode::Parallel => par_map_indexed(n, f),
    }
}

#[cfg(feature = "parallel")]
fn par_map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Runs `f` inside a pool with `workers` threads (ambient pool when `None`).
#[cfg(feature = "parallel")]
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match workers {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<R: Send>(_workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    f()
}
