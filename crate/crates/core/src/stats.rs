//! Sample means with standard errors, reduced in batch order.

use crate::exec::{run_batches, Exec};
use crate::rng::{SimRng, StreamKey};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Accumulator {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(mut self, other: &Accumulator) -> Self {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn estimate(&self) -> MeanEstimate {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = if self.n > 1 {
            ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        MeanEstimate {
            mean,
            stderr: (var / n).sqrt(),
            n: self.n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

/// Mean of `draw` over `total` independent draws; batch `b` uses the stream
/// `key.child(b)`.
pub(crate) fn mc_mean<F>(exec: Exec, total: u64, key: StreamKey, draw: F) -> MeanEstimate
where
    F: Fn(&mut SimRng) -> f64 + Sync + Send,
{
    let parts = run_batches(exec, total, key, |batch| {
        let mut rng = batch.key.rng();
        let mut acc = Accumulator::default();
        for _ in 0..batch.len {
            acc.push(draw(&mut rng));
        }
        acc
    });
    parts
        .iter()
        .fold(Accumulator::default(), Accumulator::merge)
        .estimate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn uniform_mean() {
        let est = mc_mean(Exec::Sequential, 100_000, StreamKey::new(2), |r| {
            r.random::<f64>()
        });
        assert!((est.mean - 0.5).abs() < 4.0 * est.stderr);
        assert!((est.stderr - (1.0f64 / 12.0 / 1e5).sqrt()).abs() < 1e-5);
    }
}
