use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::measure::{LimitMeasure, TailSet};
use crate::models::{
    hurwitz_zeta, CoefficientDraw, CoefficientProcess, DeterministicSequence, Gate, Interarrival,
    MatrixLaw, RewardPath, SeriesModel,
};
use crate::rng::StreamKey;
use crate::stats::mc_mean;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Provenance {
    ClosedForm,
    /// Exact sum of the first `terms` coefficients of a deterministic
    /// sequence without a closed form.
    Truncated {
        terms: usize,
        remainder_bound: f64,
    },
    MonteCarlo {
        n_draws: u64,
        stderr: f64,
    },
}

impl Provenance {
    pub fn stderr(&self) -> f64 {
        match self {
            Provenance::MonteCarlo { stderr, .. } => *stderr,
            _ => 0.0,
        }
    }
}

/// The limit of `P(X in uB) / P(|Z| > u)` for one tail set, optionally with
/// the full limit measure it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitConstant {
    pub value: f64,
    pub measure: Option<LimitMeasure>,
    pub provenance: Provenance,
    /// The tail set the value refers to, when known.
    pub set: Option<TailSet>,
}

impl LimitConstant {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            measure: None,
            provenance: Provenance::ClosedForm,
            set: None,
        }
    }
}

/// `sum_j |a_j|^alpha (w 1{a_j > 0} + (1 - w) 1{a_j < 0})`: the constant
/// for the positive ray. Swap `w` and `1 - w` for the negative ray.
pub fn linear_limit_1d(a: &[f64], w: f64, alpha: f64) -> Result<f64> {
    let total: f64 = a
        .iter()
        .map(|&x| {
            let weight = if x > 0.0 {
                w
            } else if x < 0.0 {
                1.0 - w
            } else {
                0.0
            };
            weight * x.abs().powf(alpha)
        })
        .sum();
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::ConvergenceConditionFailed(format!(
            "sum |a_j|^{alpha} diverges"
        )))
    }
}

/// The factor `E N` multiplying the noise limit measure for a random sum.
pub fn random_sum_constant(mean_count: f64) -> f64 {
    mean_count
}

fn scaled(m: &LimitMeasure, c: f64) -> Result<LimitMeasure> {
    LimitMeasure::mix(std::slice::from_ref(m), &[c])
}

/// `E[mu o M^-1]` for a matrix law.
fn expected_pushforward(mu: &LimitMeasure, law: &MatrixLaw) -> Result<LimitMeasure> {
    let alpha = mu.alpha;
    match law {
        MatrixLaw::Constant(m) => mu.pushforward(m),
        MatrixLaw::Discrete { matrices, probs } => {
            let images = matrices
                .iter()
                .map(|m| mu.pushforward(m))
                .collect::<Result<Vec<_>>>()?;
            LimitMeasure::mix(&images, probs)
        }
        MatrixLaw::UniformScalar { .. } => {
            let (a, b) = law.signed_moments(alpha).expect("scalar law");
            LimitMeasure::mix(&[mu.clone(), mu.reflect()], &[a, b])
        }
    }
}

fn deterministic_measure(mu: &LimitMeasure, seq: &DeterministicSequence) -> Result<LimitMeasure> {
    let alpha = mu.alpha;
    let m = match seq {
        DeterministicSequence::Finite(list) => {
            let images = list
                .iter()
                .map(|a| mu.pushforward(a))
                .collect::<Result<Vec<_>>>()?;
            LimitMeasure::mix(&images, &vec![1.0; images.len()])?
        }
        DeterministicSequence::Geometric { first, ratio } => {
            let r = ratio.abs().powf(alpha);
            if r >= 1.0 {
                return Err(Error::ConvergenceConditionFailed(format!(
                    "|ratio|^{alpha} = {r} >= 1"
                )));
            }
            let base = mu.pushforward(first)?;
            if *ratio >= 0.0 {
                scaled(&base, 1.0 / (1.0 - r))?
            } else {
                // even powers keep the sign, odd powers flip it
                let even = 1.0 / (1.0 - r * r);
                LimitMeasure::mix(&[base.clone(), base.reflect()], &[even, r * even])?
            }
        }
        DeterministicSequence::PowerLaw { first, exponent } => {
            let z = hurwitz_zeta(alpha * exponent, 1.0);
            if !z.is_finite() {
                return Err(Error::ConvergenceConditionFailed(format!(
                    "sum (j + 1)^-{} diverges",
                    alpha * exponent
                )));
            }
            scaled(&mu.pushforward(first)?, z)?
        }
    };
    Ok(m.compact())
}

/// The limit measure `E[sum_j mu o A_j^-1]` when it has a closed form.
pub fn expected_limit_measure(model: &SeriesModel) -> Result<Option<LimitMeasure>> {
    let mu = LimitMeasure::from_law(model.noise());
    let alpha = mu.alpha;
    let coeffs = model.coeffs();
    if let Some(seq) = coeffs.as_deterministic() {
        return deterministic_measure(&mu, &seq).map(Some);
    }
    let m = match coeffs {
        CoefficientProcess::IidRandom { weights, law } => {
            let p = mu.dim;
            let images = weights
                .iter()
                .map(|w| {
                    expected_pushforward(&mu.pushforward(&(DMatrix::identity(p, p) * *w))?, law)
                })
                .collect::<Result<Vec<_>>>()?;
            LimitMeasure::mix(&images, &vec![1.0; images.len()])?
        }
        CoefficientProcess::SreProduct { law } => {
            let Some((a, b)) = law.signed_moments(alpha) else {
                return Ok(None);
            };
            let d = (1.0 - a) * (1.0 - a) - b * b;
            if !(a + b < 1.0) {
                return Err(Error::NoncontractiveChain {
                    lhs: (1.0 - a) * (1.0 - a),
                    rhs: b * b,
                });
            }
            // sums over j of E[(Pi_j^+)^alpha] and E[(Pi_j^-)^alpha]
            LimitMeasure::mix(&[mu.clone(), mu.reflect()], &[(1.0 - a) / d, b / d])?
        }
        CoefficientProcess::RandomSum { count, .. } => {
            scaled(&mu, random_sum_constant(count.mean()))?
        }
        CoefficientProcess::RenewalReward {
            path,
            interarrival: Interarrival::Exponential { rate },
            horizon,
        } => {
            // Campbell: E sum_j mu o H(tau_j)^-1 = rate int_0^T mu o H(t)^-1 dt
            let (base, decay) = match path {
                RewardPath::Constant(m) => (m, 0.0),
                RewardPath::ExpDecay { base, rate } => (base, *rate),
            };
            let k = alpha * decay;
            let integral = if k == 0.0 {
                *horizon
            } else {
                (1.0 - (-k * horizon).exp()) / k
            };
            scaled(&mu.pushforward(base)?, rate * integral)?
        }
        _ => return Ok(None),
    };
    Ok(Some(m.compact()))
}

/// The constant for `model` on `b` when a closed form is available.
pub fn closed_form_constant(model: &SeriesModel, b: &TailSet) -> Result<Option<LimitConstant>> {
    Ok(match expected_limit_measure(model)? {
        Some(m) => Some(LimitConstant {
            value: m.eval(b)?,
            measure: Some(m),
            provenance: Provenance::ClosedForm,
            set: Some(b.clone()),
        }),
        None => None,
    })
}

/// Estimates `E[sum_j mu o A_j^-1](B)` by drawing coefficient sequences;
/// exact for deterministic coefficients.
pub fn limit_constant_mc(
    model: &SeriesModel,
    b: &TailSet,
    n_draws: u64,
    key: StreamKey,
    exec: Exec,
) -> Result<LimitConstant> {
    if model.gate() == Gate::Unchecked {
        return Err(Error::RefuseToSample);
    }
    let coeffs = model.coeffs();
    if coeffs.is_deterministic() {
        if let Some(c) = closed_form_constant(model, b)? {
            return Ok(c);
        }
        let t = model.truncation()?;
        let mu = LimitMeasure::from_law(model.noise());
        let mut draw = CoefficientDraw::default();
        coeffs.sample_into(&mut key.rng(), t.horizon, &mut draw);
        let images = (0..draw.len)
            .map(|k| mu.pushforward(&draw.matrix(k)))
            .collect::<Result<Vec<_>>>()?;
        let m = LimitMeasure::mix(&images, &vec![1.0; images.len()])?.compact();
        return Ok(LimitConstant {
            value: m.eval(b)?,
            measure: Some(m),
            provenance: Provenance::Truncated {
                terms: draw.len,
                remainder_bound: t.remainder_bound,
            },
            set: Some(b.clone()),
        });
    }
    if n_draws < 2 {
        return Err(crate::error::invalid(
            "Monte Carlo constant needs at least 2 draws",
        ));
    }
    let horizon = model.truncation()?.horizon;
    let mu = LimitMeasure::from_law(model.noise());
    let mu_b = mu.eval(b)?;
    // validate the set against the measure once so draws cannot fail
    mu.eval_pushforward(&DMatrix::identity(mu.dim, mu.dim), b)?;
    let est = mc_mean(exec, n_draws, key, |rng| {
        let mut draw = CoefficientDraw::default();
        coeffs.sample_into(rng, horizon, &mut draw);
        if draw.identity_run {
            return draw.len as f64 * mu_b;
        }
        (0..draw.len)
            .map(|k| mu.eval_pushforward(&draw.matrix(k), b).unwrap_or(f64::NAN))
            .sum()
    });
    if est.mean.is_nan() {
        return Err(Error::CapBoundaryTie(f64::NAN));
    }
    Ok(LimitConstant {
        value: est.mean,
        measure: None,
        provenance: Provenance::MonteCarlo {
            n_draws,
            stderr: est.stderr,
        },
        set: Some(b.clone()),
    })
}
