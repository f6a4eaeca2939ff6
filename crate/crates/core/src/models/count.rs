use rand::Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{invalid, Result};
use crate::rng::open_unit;

/// Laws of the positive integer number of terms in a random sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CountLaw {
    Constant(u64),
    /// Geometric on `{1, 2, ...}` with the given mean.
    Geometric {
        mean: f64,
    },
    /// `floor(R)` for `R ~ Pareto(tail_index)` on `[1, inf)`, so that
    /// `P(N >= n) = n^(-tail_index)`.
    ParetoFloor {
        tail_index: f64,
    },
}

/// Terms of `E N^q` summed explicitly before the integral tail correction.
const PARETO_EXPLICIT_TERMS: u64 = 200_000;

impl CountLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CountLaw::Constant(0) => Err(invalid("constant count must be at least 1")),
            CountLaw::Geometric { mean } if !(mean >= 1.0 && mean.is_finite()) => {
                Err(invalid(format!("geometric mean must be >= 1, got {mean}")))
            }
            CountLaw::ParetoFloor { tail_index }
                if !(tail_index > 0.0 && tail_index.is_finite()) =>
            {
                Err(invalid(format!(
                    "tail index must be positive, got {tail_index}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            CountLaw::Constant(n) => n,
            CountLaw::Geometric { mean } => {
                if mean == 1.0 {
                    return 1;
                }
                // failures before the first success, shifted onto {1, 2, ...}
                Geometric::new(1.0 / mean).expect("validated").sample(rng) + 1
            }
            CountLaw::ParetoFloor { tail_index } => {
                let r = open_unit(rng).powf(-1.0 / tail_index);
                if r >= u64::MAX as f64 {
                    u64::MAX
                } else {
                    r.floor() as u64
                }
            }
        }
    }

    /// `E N^q` (infinite when the moment does not exist).
    pub fn moment(&self, q: f64) -> f64 {
        match *self {
            CountLaw::Constant(n) => (n as f64).powf(q),
            CountLaw::Geometric { mean } => {
                let p = 1.0 / mean;
                if p == 1.0 {
                    return 1.0;
                }
                let mut total = 0.0;
                let mut mass = p;
                let mut n = 1.0f64;
                loop {
                    let term = mass * n.powf(q);
                    total += term;
                    if n > 2.0 * mean && term < 1e-18 * total {
                        break total;
                    }
                    mass *= 1.0 - p;
                    n += 1.0;
                }
            }
            CountLaw::ParetoFloor { tail_index } => {
                if q >= tail_index {
                    return f64::INFINITY;
                }
                // E N^q = sum_n (n^q - (n-1)^q) P(N >= n)
                let mut total = 0.0;
                for n in 1..=PARETO_EXPLICIT_TERMS {
                    let n = n as f64;
                    total += (n.powf(q) - (n - 1.0).powf(q)) * n.powf(-tail_index);
                }
                let m = PARETO_EXPLICIT_TERMS as f64 + 0.5;
                total + q * m.powf(q - tail_index) / (tail_index - q)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.moment(1.0)
    }

    /// `P(N > u)`.
    pub fn survival(&self, u: f64) -> f64 {
        if u < 1.0 {
            return 1.0;
        }
        let k = u.floor();
        match *self {
            CountLaw::Constant(n) => f64::from(u8::from((n as f64) > u)),
            CountLaw::Geometric { mean } => (1.0 - 1.0 / mean).powf(k),
            CountLaw::ParetoFloor { tail_index } => (k + 1.0).powf(-tail_index),
        }
    }
}
