use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::Exec;
use crate::models::{op_norm, MatrixLaw};
use crate::rng::StreamKey;
use crate::stats::{mc_mean, MeanEstimate};

/// `[w (1 - a) + (1 - w) b] / [(1 - a)^2 - b^2]` with `a = E(Y+)^alpha` and
/// `b = E(Y-)^alpha`: the positive-ray constant of a scalar recurrence.
pub fn sre_constant_1d(w: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&w) || !(a >= 0.0) || !(b >= 0.0) {
        return Err(invalid(format!(
            "need w in [0, 1] and a, b >= 0 (w = {w}, a = {a}, b = {b})"
        )));
    }
    let (lhs, rhs) = ((1.0 - a) * (1.0 - a), b * b);
    if !(a + b < 1.0) {
        return Err(Error::NoncontractiveChain { lhs, rhs });
    }
    Ok((w * (1.0 - a) + (1.0 - w) * b) / (lhs - rhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionVerdict {
    /// `E||M||^(alpha + eps)`.
    pub estimate: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// Checks `E||M||^(alpha + eps) < 1`; every supported matrix law has this
/// moment in closed form, so the stderr is zero.
pub fn sre_contraction_check(
    law: &MatrixLaw,
    alpha: f64,
    epsilon: f64,
) -> Result<ContractionVerdict> {
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    law.validate()?;
    let estimate = law.norm_moment(alpha + epsilon);
    Ok(ContractionVerdict {
        estimate,
        stderr: 0.0,
        pass: estimate < 1.0,
    })
}

/// Mean of `(n + 1)^-1 log ||M_0 ... M_-n||` over `reps` chains. The norm of
/// the product bounds the top Lyapunov exponent from above on average, so
/// this is a screening proxy, not an exact exponent.
pub fn lyapunov_estimate(
    law: &MatrixLaw,
    n: usize,
    reps: u64,
    key: StreamKey,
    exec: Exec,
) -> Result<MeanEstimate> {
    law.validate()?;
    let (r, c) = law.shape();
    if r != c {
        return Err(invalid("Lyapunov exponent needs square matrices"));
    }
    if reps < 2 {
        return Err(invalid("need at least 2 repetitions"));
    }
    Ok(mc_mean(exec, reps, key, |rng| {
        // renormalize the running product to avoid under/overflow
        let mut product = DMatrix::identity(r, r);
        let mut log_scale = 0.0;
        for _ in 0..=n {
            product = &product * law.sample(rng);
            let s = op_norm(&product);
            if s == 0.0 {
                return f64::NEG_INFINITY;
            }
            log_scale += s.ln();
            product /= s;
        }
        log_scale / (n + 1) as f64
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sre_constant_examples() {
        assert_relative_eq!(
            sre_constant_1d(1.0, 0.25, 0.0).unwrap(),
            4.0 / 3.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            sre_constant_1d(0.5, 0.3, 0.2).unwrap(),
            1.0,
            max_relative = 1e-14
        );
        assert_eq!(sre_constant_1d(0.37, 0.0, 0.0).unwrap(), 0.37);
        assert!(matches!(
            sre_constant_1d(0.5, 0.5, 0.5),
            Err(Error::NoncontractiveChain { .. })
        ));
    }

    #[test]
    fn contraction_examples() {
        let v = sre_contraction_check(&MatrixLaw::scalar(0.5), 1.5, 0.25).unwrap();
        assert!(v.pass);
        assert_relative_eq!(v.estimate, 0.5f64.powf(1.75), max_relative = 1e-15);
        assert!(
            !sre_contraction_check(&MatrixLaw::scalar(1.0), 1.5, 0.25)
                .unwrap()
                .pass
        );
        let u = sre_contraction_check(
            &MatrixLaw::UniformScalar {
                low: 0.0,
                high: 0.9,
                dim: 1,
            },
            1.5,
            0.25,
        )
        .unwrap();
        assert_relative_eq!(u.estimate, 0.9f64.powf(1.75) / 2.75, max_relative = 1e-14);
        assert!(u.pass);
    }

    #[test]
    fn lyapunov_examples() {
        let key = StreamKey::new(17);
        let c = lyapunov_estimate(&MatrixLaw::scalar(0.5), 50, 10, key, Exec::Sequential).unwrap();
        assert_relative_eq!(c.mean, 0.5f64.ln(), max_relative = 1e-12);
        let two_point = MatrixLaw::Discrete {
            matrices: vec![
                DMatrix::from_element(1, 1, 0.5),
                DMatrix::from_element(1, 1, 2.0),
            ],
            probs: vec![0.5, 0.5],
        };
        let g = lyapunov_estimate(&two_point, 100, 4000, key, Exec::Parallel).unwrap();
        assert!(g.mean.abs() < 4.0 * g.stderr, "{} +- {}", g.mean, g.stderr);
        let (s, co) = (0.6f64, 0.8f64);
        let rotation = MatrixLaw::Constant(DMatrix::from_row_slice(2, 2, &[co, -s, s, co]));
        let r = lyapunov_estimate(&rotation, 200, 4, key, Exec::Sequential).unwrap();
        assert!(r.mean.abs() < 1e-12);
    }
}
