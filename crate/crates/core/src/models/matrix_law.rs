use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::models::op_norm;

/// Law of the i.i.d. matrices driving random coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixLaw {
    Constant(DMatrix<f64>),
    /// `U * Id_dim` with `U ~ Uniform(low, high)`.
    UniformScalar {
        low: f64,
        high: f64,
        dim: usize,
    },
    /// Finitely many matrices with probabilities.
    Discrete {
        matrices: Vec<DMatrix<f64>>,
        probs: Vec<f64>,
    },
}

impl MatrixLaw {
    pub fn scalar(value: f64) -> Self {
        MatrixLaw::Constant(DMatrix::from_element(1, 1, value))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MatrixLaw::Constant(m) => {
                if m.iter().any(|v| !v.is_finite()) || m.is_empty() {
                    return Err(invalid("constant matrix must be finite and nonempty"));
                }
            }
            MatrixLaw::UniformScalar { low, high, dim } => {
                if !(low.is_finite() && high.is_finite() && low < high) || *dim == 0 {
                    return Err(invalid(format!(
                        "uniform law needs low < high, got [{low}, {high}]"
                    )));
                }
            }
            MatrixLaw::Discrete { matrices, probs } => {
                if matrices.is_empty() || matrices.len() != probs.len() {
                    return Err(invalid(
                        "discrete matrix law needs one probability per matrix",
                    ));
                }
                let (r, c) = matrices[0].shape();
                if matrices
                    .iter()
                    .any(|m| m.shape() != (r, c) || m.iter().any(|v| !v.is_finite()))
                {
                    return Err(invalid(
                        "discrete matrix law: matrices must share a finite shape",
                    ));
                }
                let total: f64 = probs.iter().sum();
                if probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
                    return Err(invalid(
                        "discrete matrix law: probabilities must be nonnegative and sum to 1",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            MatrixLaw::Constant(m) => m.shape(),
            MatrixLaw::UniformScalar { dim, .. } => (*dim, *dim),
            MatrixLaw::Discrete { matrices, .. } => matrices[0].shape(),
        }
    }

    /// True when every realization is a multiple of the identity (or 1x1),
    /// so norms of products are products of norms.
    pub fn is_scalar(&self) -> bool {
        let is_scaled_identity = |m: &DMatrix<f64>| {
            m.is_square()
                && (0..m.nrows()).all(|i| {
                    (0..m.ncols()).all(|j| {
                        if i == j {
                            m[(i, j)] == m[(0, 0)]
                        } else {
                            m[(i, j)] == 0.0
                        }
                    })
                })
        };
        match self {
            MatrixLaw::Constant(m) => is_scaled_identity(m),
            MatrixLaw::UniformScalar { .. } => true,
            MatrixLaw::Discrete { matrices, .. } => matrices.iter().all(is_scaled_identity),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        match self {
            MatrixLaw::Constant(m) => m.clone(),
            MatrixLaw::UniformScalar { low, high, dim } => {
                let u = low + (high - low) * rng.random::<f64>();
                DMatrix::identity(*dim, *dim) * u
            }
            MatrixLaw::Discrete { matrices, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (m, p) in matrices.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return m.clone();
                    }
                }
                matrices[matrices.len() - 1].clone()
            }
        }
    }

    /// `E ||M||^q`, closed form.
    pub fn norm_moment(&self, q: f64) -> f64 {
        match self {
            MatrixLaw::Constant(m) => pow0(op_norm(m), q),
            MatrixLaw::UniformScalar { low, high, .. } => {
                let anti = |m: f64| m.signum() * m.abs().powf(q + 1.0) / (q + 1.0);
                (anti(*high) - anti(*low)) / (high - low)
            }
            MatrixLaw::Discrete { matrices, probs } => matrices
                .iter()
                .zip(probs)
                .map(|(m, p)| p * pow0(op_norm(m), q))
                .sum(),
        }
    }

    /// `E log ||M||` (may be `-inf`).
    pub fn mean_log_norm(&self) -> f64 {
        match self {
            MatrixLaw::Constant(m) => op_norm(m).ln(),
            MatrixLaw::UniformScalar { low, high, .. } => {
                let anti = |m: f64| if m == 0.0 { 0.0 } else { m * m.abs().ln() - m };
                (anti(*high) - anti(*low)) / (high - low)
            }
            MatrixLaw::Discrete { matrices, probs } => matrices
                .iter()
                .zip(probs)
                .map(|(m, p)| if *p > 0.0 { p * op_norm(m).ln() } else { 0.0 })
                .sum(),
        }
    }

    /// `(E[(Y+)^q], E[(Y-)^q])` for a law `M = Y * Id`.
    pub fn signed_moments(&self, q: f64) -> Option<(f64, f64)> {
        if !self.is_scalar() {
            return None;
        }
        let parts = |y: f64| (pow0(y.max(0.0), q), pow0((-y).max(0.0), q));
        Some(match self {
            MatrixLaw::Constant(m) => parts(m[(0, 0)]),
            MatrixLaw::UniformScalar { low, high, .. } => {
                let up = |m: f64| m.max(0.0).powf(q + 1.0) / (q + 1.0);
                let width = high - low;
                (
                    (up(*high) - up(*low)) / width,
                    (up(-low) - up(-high)) / width,
                )
            }
            MatrixLaw::Discrete { matrices, probs } => {
                matrices.iter().zip(probs).fold((0.0, 0.0), |acc, (m, p)| {
                    let (a, b) = parts(m[(0, 0)]);
                    (acc.0 + p * a, acc.1 + p * b)
                })
            }
        })
    }

    /// `P(M = 0)`.
    pub fn prob_zero(&self) -> f64 {
        match self {
            MatrixLaw::Constant(m) => f64::from(u8::from(m.iter().all(|v| *v == 0.0))),
            MatrixLaw::UniformScalar { .. } => 0.0,
            MatrixLaw::Discrete { matrices, probs } => matrices
                .iter()
                .zip(probs)
                .filter(|(m, _)| m.iter().all(|v| *v == 0.0))
                .map(|(_, p)| p)
                .sum(),
        }
    }
}

/// `x^q` with the convention `0^0 = 1`.
pub(crate) fn pow0(x: f64, q: f64) -> f64 {
    if q == 0.0 {
        1.0
    } else {
        x.powf(q)
    }
}
