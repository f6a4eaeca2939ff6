//! Batch execution of Monte Carlo work.
//!
//! Work is cut into fixed-size batches and batch `b` always draws from
//! `key.child(b)`. Per-batch results come back in batch order and callers
//! reduce them sequentially, so outputs are bit-identical for any worker count
//! and for the sequential fallback.

use crate::rng::StreamKey;

/// Simulations per batch. Part of the reproducibility contract: changing it
/// changes every simulated number.
pub const BATCH_SIZE: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Rayon data parallelism; `workers: None` uses the global pool. Without
    /// the `parallel` feature this runs sequentially.
    #[default]
    Parallel,
    Workers(usize),
}

impl Exec {
    pub fn from_workers(workers: Option<usize>) -> Self {
        match workers {
            Some(1) => Exec::Sequential,
            Some(n) => Exec::Workers(n),
            None => Exec::Parallel,
        }
    }
}

/// One unit of batched work: the batch index, its stream key and how many
/// simulations it covers.
#[derive(Debug, Clone, Copy)]
pub struct Batch {
    pub index: u64,
    pub key: StreamKey,
    pub len: u64,
}

pub fn batches(total: u64, key: StreamKey) -> impl Iterator<Item = Batch> + Clone {
    let count = total.div_ceil(BATCH_SIZE);
    (0..count).map(move |index| Batch {
        index,
        key: key.child(index),
        len: BATCH_SIZE.min(total - index * BATCH_SIZE),
    })
}

/// Runs `work` over every batch of `total` simulations and returns the
/// per-batch results in batch order.
pub fn run_batches<T, F>(exec: Exec, total: u64, key: StreamKey, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(Batch) -> T + Sync + Send,
{
    match exec {
        Exec::Sequential => batches(total, key).map(work).collect(),
        #[cfg(feature = "parallel")]
        Exec::Parallel => par_run(total, key, &work),
        #[cfg(feature = "parallel")]
        Exec::Workers(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| par_run(total, key, &work)),
            Err(_) => par_run(total, key, &work),
        },
        #[cfg(not(feature = "parallel"))]
        _ => batches(total, key).map(work).collect(),
    }
}

#[cfg(feature = "parallel")]
fn par_run<T, F>(total: u64, key: StreamKey, work: &F) -> Vec<T>
where
    T: Send,
    F: Fn(Batch) -> T + Sync + Send,
{
    use rayon::prelude::*;
    let all: Vec<Batch> = batches(total, key).collect();
    all.into_par_iter().map(work).collect()
}
