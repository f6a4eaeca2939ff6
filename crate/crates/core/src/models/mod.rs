//! Series models `X = sum_j A_j Z_j` and their truncated samplers.

mod coefficients;
mod count;
mod matrix_law;

pub use coefficients::{
    CoefficientDraw, CoefficientKind, CoefficientProcess, DeterministicSequence, Envelope,
    Interarrival, RewardPath,
};
pub use count::CountLaw;
pub use matrix_law::MatrixLaw;

pub(crate) use coefficients::hurwitz_zeta;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::law::RegVarLaw;
use crate::rng::{SimRng, StreamKey};
use crate::theory::{default_epsilon, Regime};

/// Operator (spectral) norm; Euclidean norm for row or column vectors.
pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 1 || a.ncols() == 1 {
        return a.norm();
    }
    a.clone().singular_values().max()
}

/// How many terms of an infinite series are simulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationPolicy {
    FixedN(usize),
    /// Smallest `n` whose analytic remainder bound is at most `delta`.
    TailBudget(f64),
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy::TailBudget(1e-6)
    }
}

/// The truncation actually used: terms `A_0 .. A_{horizon-1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub horizon: usize,
    pub remainder_bound: f64,
}

/// Largest horizon the tail-budget search will accept.
const MAX_HORIZON: usize = 1 << 24;

/// Sampling permission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Unchecked,
    Certified,
    Override,
}

#[derive(Debug, Clone)]
pub struct SeriesModel {
    noise: RegVarLaw,
    coeffs: CoefficientProcess,
    truncation: TruncationPolicy,
    epsilon: f64,
    gate: Gate,
    nonzero_mean_declared: bool,
}

impl SeriesModel {
    /// Pairs a noise law with a coefficient process; no moment checks.
    pub fn new(noise: RegVarLaw, coeffs: CoefficientProcess) -> Result<Self> {
        coeffs.validate()?;
        let (_, p) = coeffs.shape();
        if p != noise.dim() {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: noise.dim(),
            });
        }
        let epsilon = default_epsilon(noise.alpha());
        Ok(Self {
            noise,
            coeffs,
            truncation: TruncationPolicy::default(),
            epsilon,
            gate: Gate::Unchecked,
            nonzero_mean_declared: false,
        })
    }

    pub fn with_truncation(mut self, truncation: TruncationPolicy) -> Result<Self> {
        match truncation {
            TruncationPolicy::FixedN(0) => return Err(invalid("fixed truncation needs n >= 1")),
            TruncationPolicy::TailBudget(d) if !(d > 0.0 && d.is_finite()) => {
                return Err(invalid(format!("tail budget must be positive, got {d}")))
            }
            _ => {}
        }
        self.truncation = truncation;
        if self.gate == Gate::Certified {
            self.gate = Gate::Unchecked;
        }
        Ok(self)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        let alpha = self.noise.alpha();
        if !(epsilon > 0.0 && epsilon < alpha) {
            return Err(invalid(format!(
                "epsilon must lie in (0, {alpha}), got {epsilon}"
            )));
        }
        self.epsilon = epsilon;
        if self.gate == Gate::Certified {
            self.gate = Gate::Unchecked;
        }
        Ok(self)
    }

    /// Declares that the noise mean is nonzero on purpose (the
    /// summable-coefficient path); the certifier then checks sufficient
    /// conditions instead of rejecting.
    pub fn declare_nonzero_mean(mut self) -> Self {
        self.nonzero_mean_declared = true;
        self
    }

    /// Permits sampling without certification.
    pub fn with_override(mut self) -> Self {
        self.gate = Gate::Override;
        self
    }

    pub(crate) fn set_certified(&mut self, ok: bool) {
        if self.gate != Gate::Override {
            self.gate = if ok { Gate::Certified } else { Gate::Unchecked };
        }
    }

    pub fn noise(&self) -> &RegVarLaw {
        &self.noise
    }

    pub fn coeffs(&self) -> &CoefficientProcess {
        &self.coeffs
    }

    pub fn alpha(&self) -> f64 {
        self.noise.alpha()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn gate(&self) -> Gate {
        self.gate
    }

    pub fn truncation_policy(&self) -> TruncationPolicy {
        self.truncation
    }

    pub fn nonzero_mean_declared(&self) -> bool {
        self.nonzero_mean_declared
    }

    /// `(d, p)`.
    pub fn dims(&self) -> (usize, usize) {
        self.coeffs.shape()
    }

    /// Resolves the truncation policy against the coefficient envelope.
    pub fn truncation(&self) -> Result<Truncation> {
        if self.coeffs.is_finite_support() {
            return Ok(Truncation {
                horizon: usize::MAX,
                remainder_bound: 0.0,
            });
        }
        let (q, power) = CoefficientProcess::truncation_exponent(self.alpha(), self.epsilon);
        let tail = |n: usize| self.coeffs.tail_sum_norm_moment(q, n).value();
        match self.truncation {
            TruncationPolicy::FixedN(n) => Ok(Truncation {
                horizon: n,
                remainder_bound: tail(n).unwrap_or(f64::INFINITY),
            }),
            TruncationPolicy::TailBudget(delta) => {
                let budget = delta.powi(power);
                let summable = tail(0).is_some_and(f64::is_finite);
                if !summable {
                    return Err(invalid(
                        "tail-budget truncation needs a summable norm envelope",
                    ));
                }
                let fits = |n: usize| tail(n).is_some_and(|v| v <= budget);
                if fits(0) {
                    return Ok(Truncation {
                        horizon: 0,
                        remainder_bound: tail(0).unwrap(),
                    });
                }
                let mut hi = 1;
                while !fits(hi) {
                    hi *= 2;
                    if hi > MAX_HORIZON {
                        return Err(invalid(format!(
                            "tail budget {delta} needs more than {MAX_HORIZON} terms"
                        )));
                    }
                }
                let mut lo = hi / 2;
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if fits(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Ok(Truncation {
                    horizon: hi,
                    remainder_bound: tail(hi).unwrap(),
                })
            }
        }
    }

    /// A sampler over the stream `key`.
    pub fn sampler(&self, key: StreamKey) -> Result<SeriesSampler<'_>> {
        SeriesSampler::new(self, key)
    }
}

/// Diagnostics of one series draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleDiagnostics {
    pub n_used: usize,
    pub remainder_bound: f64,
}

/// Draws series realizations from a coefficient stream and a disjoint
/// noise stream derived from the same key.
pub struct SeriesSampler<'a> {
    model: &'a SeriesModel,
    truncation: Truncation,
    coeff_rng: SimRng,
    noise_rng: SimRng,
    draw: CoefficientDraw,
    fixed: bool,
    z: Vec<f64>,
}

impl<'a> SeriesSampler<'a> {
    pub fn new(model: &'a SeriesModel, key: StreamKey) -> Result<Self> {
        if model.gate == Gate::Unchecked {
            return Err(Error::RefuseToSample);
        }
        let truncation = model.truncation()?;
        let (coeff_rng, noise_rng) = key.split_roles();
        let mut draw = CoefficientDraw::default();
        let fixed = model.coeffs.is_deterministic()
            && !matches!(model.coeffs, CoefficientProcess::RandomSum { .. });
        if fixed {
            model
                .coeffs
                .sample_into(&mut key.rng(), truncation.horizon, &mut draw);
        }
        Ok(Self {
            model,
            truncation,
            coeff_rng,
            noise_rng,
            draw,
            fixed,
            z: vec![0.0; model.noise.dim()],
        })
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    /// Writes one realization of `X` into `x` and returns the number of
    /// terms summed.
    pub fn next_into(&mut self, x: &mut [f64]) -> usize {
        if !self.fixed {
            self.model.coeffs.sample_into(
                &mut self.coeff_rng,
                self.truncation.horizon,
                &mut self.draw,
            );
        }
        x.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..self.draw.len {
            self.model
                .noise
                .sample_into(&mut self.noise_rng, &mut self.z);
            self.draw.apply_add(k, &self.z, x);
        }
        self.draw.len
    }

    /// One realization of a one-dimensional series.
    pub fn next_scalar(&mut self) -> f64 {
        if !self.fixed {
            self.model.coeffs.sample_into(
                &mut self.coeff_rng,
                self.truncation.horizon,
                &mut self.draw,
            );
        }
        let noise = &self.model.noise;
        let mut x = 0.0;
        if self.draw.identity_run {
            for _ in 0..self.draw.len {
                x += noise.sample_scalar(&mut self.noise_rng);
            }
        } else {
            for k in 0..self.draw.len {
                x += self.draw.scalar(k) * noise.sample_scalar(&mut self.noise_rng);
            }
        }
        x
    }

    /// The coefficients of the most recent draw.
    pub fn last_coefficients(&self) -> &CoefficientDraw {
        &self.draw
    }
}

/// One draw of `X` from the stream `key`.
pub fn sample_series(
    model: &SeriesModel,
    key: StreamKey,
) -> Result<(DVector<f64>, SampleDiagnostics)> {
    let mut sampler = model.sampler(key)?;
    let mut x = vec![0.0; model.dims().0];
    let n_used = sampler.next_into(&mut x);
    let diagnostics = SampleDiagnostics {
        n_used,
        remainder_bound: sampler.truncation.remainder_bound,
    };
    Ok((DVector::from_vec(x), diagnostics))
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::ConvergenceConditionFailed(msg()))
    }
}

/// Deterministic linear process `sum_j A_j W_{-j}`.
pub fn linear_process(coeffs: DeterministicSequence, noise: RegVarLaw) -> Result<SeriesModel> {
    let model = SeriesModel::new(noise, CoefficientProcess::Deterministic(coeffs))?;
    let (alpha, eps) = (model.alpha(), model.epsilon);
    let CoefficientProcess::Deterministic(seq) = &model.coeffs else {
        unreachable!()
    };
    if alpha <= 2.0 {
        let s = seq.sum_pow(alpha - eps);
        require(s.is_finite(), || {
            format!("sum ||A_j||^{} diverges", alpha - eps)
        })?;
    } else {
        let s = seq.sum_pow(2.0);
        require(s.is_finite(), || "sum ||A_j||^2 diverges".into())?;
    }
    Ok(model)
}

/// Stationary solution of `X_k = M_k X_{k-1} + W_k`.
pub fn sre_model(law: MatrixLaw, noise: RegVarLaw) -> Result<SeriesModel> {
    let model = SeriesModel::new(noise, CoefficientProcess::SreProduct { law })?;
    let CoefficientProcess::SreProduct { law } = &model.coeffs else {
        unreachable!()
    };
    let q = model.alpha() + model.epsilon;
    let m = law.norm_moment(q);
    if !(m < 1.0) {
        return Err(Error::SreNoncontractive(format!(
            "E||M||^{q} = {m} is not below 1"
        )));
    }
    Ok(model)
}

fn random_sum_exponent(alpha: f64, eps: f64) -> f64 {
    match Regime::of(alpha) {
        Regime::Interior => 1.0,
        Regime::Boundary => (alpha + eps) / (alpha - eps),
        Regime::AboveTwo => (alpha + eps) / 2.0,
    }
}

/// Random sum `sum_{j=1}^N Z_j` with `N` independent of the noise.
pub fn random_sum_model(count: CountLaw, noise: RegVarLaw) -> Result<SeriesModel> {
    let dim = noise.dim();
    let model = SeriesModel::new(noise, CoefficientProcess::RandomSum { count, dim })?;
    let q = random_sum_exponent(model.alpha(), model.epsilon);
    let m = count.moment(q);
    require(m.is_finite(), || format!("E N^{q} is infinite"))?;
    Ok(model)
}

/// `A_j = weights[j] * M_j` with i.i.d. matrices independent of the noise.
pub fn iid_coefficient_model(
    weights: Vec<f64>,
    law: MatrixLaw,
    noise: RegVarLaw,
) -> Result<SeriesModel> {
    SeriesModel::new(noise, CoefficientProcess::IidRandom { weights, law })
}

/// Coefficients of `S_n = X_1 + ... + X_n` for a linear process with
/// schedule `schedule[k - 1][j] = A_{k, j}`: emits `A_j = B_{n, n - j}` with
/// `B_{n, i} = sum_{k = max(1, i)}^n A_{k, k - i}`.
pub fn partial_sum_coefficients(
    schedule: &[Vec<DMatrix<f64>>],
    n: usize,
) -> Result<CoefficientProcess> {
    if n == 0 || schedule.len() < n || schedule[..n].iter().any(Vec::is_empty) {
        return Err(invalid("partial sums need n >= 1 nonempty schedule rows"));
    }
    let shape = schedule[0][0].shape();
    let rows = &schedule[..n];
    if rows.iter().flatten().any(|m| m.shape() != shape) {
        return Err(invalid("schedule matrices must share one shape"));
    }
    // smallest i with a nonzero contribution: k - (len_k - 1)
    let i_min = rows
        .iter()
        .enumerate()
        .map(|(k, r)| (k + 1) as i64 - (r.len() as i64 - 1))
        .min()
        .unwrap();
    let n = n as i64;
    let mut out = Vec::with_capacity((n - i_min + 1) as usize);
    for j in 0..=(n - i_min) {
        let i = n - j;
        let mut b = DMatrix::zeros(shape.0, shape.1);
        for k in i.max(1)..=n {
            if let Some(a) = rows[(k - 1) as usize].get((k - i) as usize) {
                b += a;
            }
        }
        out.push(b);
    }
    Ok(CoefficientProcess::PartialSum(out))
}

/// `int_0^T H_t dC_t` for a renewal reward process `C` with jumps `noise`.
pub fn renewal_reward_integral_model(
    path: RewardPath,
    interarrival: Interarrival,
    noise: RegVarLaw,
    horizon: f64,
) -> Result<SeriesModel> {
    SeriesModel::new(
        noise,
        CoefficientProcess::RenewalReward {
            path,
            interarrival,
            horizon,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::{LawFamily, SpectralAtom};
    use approx::assert_relative_eq;

    fn noise(alpha: f64, w: f64) -> RegVarLaw {
        RegVarLaw::new(
            alpha,
            vec![
                SpectralAtom::new(vec![1.0], w),
                SpectralAtom::new(vec![-1.0], 1.0 - w),
            ],
            LawFamily::ParetoPolar,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn op_norm_uses_largest_singular_value() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 4.0, 5.0]);
        // singular values of [[3,0],[4,5]] are sqrt(45) and sqrt(5)
        assert_relative_eq!(op_norm(&a), 45f64.sqrt(), max_relative = 1e-12);
        assert_eq!(op_norm(&DMatrix::from_element(1, 1, -2.0)), 2.0);
    }

    #[test]
    fn sre_tail_budget_example() {
        let model = sre_model(MatrixLaw::scalar(0.5), noise(1.5, 0.7)).unwrap();
        assert_eq!(model.epsilon(), 0.125);
        let model = model.with_epsilon(0.25).unwrap();
        let t = model.truncation().unwrap();
        assert_eq!(t.horizon, 17);
        assert!(t.remainder_bound <= 1e-6);
        let prev = 0.5f64.powf(1.25 * 16.0) / (1.0 - 0.5f64.powf(1.25));
        assert!(prev > 1e-6);
    }

    #[test]
    fn constructors_reject_bad_models() {
        assert!(matches!(
            sre_model(MatrixLaw::scalar(1.0), noise(1.5, 0.5)),
            Err(Error::SreNoncontractive(_))
        ));
        let uniform = MatrixLaw::UniformScalar {
            low: 0.0,
            high: 0.9,
            dim: 1,
        };
        assert!(sre_model(uniform, noise(1.5, 0.5)).is_ok());
        let p_series = DeterministicSequence::PowerLaw {
            first: DMatrix::identity(1, 1),
            exponent: 1.0 / 1.5,
        };
        assert!(matches!(
            linear_process(p_series, noise(1.5, 0.5)),
            Err(Error::ConvergenceConditionFailed(_))
        ));
        let heavy = CountLaw::ParetoFloor { tail_index: 1.1 };
        assert!(matches!(
            random_sum_model(heavy, noise(2.0, 0.5)),
            Err(Error::ConvergenceConditionFailed(_))
        ));
        assert!(random_sum_model(CountLaw::Geometric { mean: 4.0 }, noise(1.5, 0.5)).is_ok());
        assert!(renewal_reward_integral_model(
            RewardPath::Constant(DMatrix::identity(1, 1)),
            Interarrival::Deterministic(1.0),
            noise(1.5, 0.5),
            0.0
        )
        .is_err());
    }

    #[test]
    fn refuses_unchecked_models() {
        let model =
            linear_process(DeterministicSequence::scalars(&[1.0]), noise(1.5, 0.5)).unwrap();
        assert!(matches!(
            sample_series(&model, StreamKey::new(1)),
            Err(Error::RefuseToSample)
        ));
        let model = model.with_override();
        let (x, diag) = sample_series(&model, StreamKey::new(1)).unwrap();
        assert_eq!(diag.n_used, 1);
        assert_eq!(diag.remainder_bound, 0.0);
        // a single unit coefficient reproduces the noise draw
        let (_, mut noise_rng) = StreamKey::new(1).split_roles();
        assert_eq!(x[0], model.noise().sample_scalar(&mut noise_rng));
    }

    #[test]
    fn sre_recursion_consistency() {
        let law = MatrixLaw::UniformScalar {
            low: -0.8,
            high: 0.6,
            dim: 2,
        };
        let z = RegVarLaw::new(
            1.5,
            vec![
                SpectralAtom::new(vec![0.6, 0.8], 0.5),
                SpectralAtom::new(vec![-1.0, 0.0], 0.5),
            ],
            LawFamily::ParetoPolar,
            1.0,
        )
        .unwrap();
        let model = sre_model(law.clone(), z.clone())
            .unwrap()
            .with_truncation(TruncationPolicy::FixedN(30))
            .unwrap()
            .with_override();
        for seed in 0..20 {
            let key = StreamKey::new(seed);
            let (x, diag) = sample_series(&model, key).unwrap();
            assert_eq!(diag.n_used, 30);
            let (mut coeff_rng, mut noise_rng) = key.split_roles();
            let ms: Vec<_> = (0..29).map(|_| law.sample(&mut coeff_rng)).collect();
            let zs: Vec<_> = (0..30)
                .map(|_| {
                    let mut v = vec![0.0; 2];
                    z.sample_into(&mut noise_rng, &mut v);
                    DVector::from_vec(v)
                })
                .collect();
            let mut y = DVector::zeros(2);
            for j in (0..30).rev() {
                y = if j < 29 { &ms[j] * y } else { y } + &zs[j];
            }
            assert!((x - y).amax() < 1e-12);
        }
    }

    #[test]
    fn coefficient_stream_is_separate_from_noise() {
        let model = iid_coefficient_model(
            vec![1.0, 0.5, 0.25],
            MatrixLaw::UniformScalar {
                low: -1.0,
                high: 1.0,
                dim: 1,
            },
            noise(1.5, 0.5),
        )
        .unwrap()
        .with_override();
        let key = StreamKey::new(9);
        let mut a = model.sampler(key).unwrap();
        let mut b = model.sampler(key).unwrap();
        // advance b's noise stream only; coefficients must not move
        b.noise_rng = StreamKey::new(12345).rng();
        a.next_scalar();
        b.next_scalar();
        let (ca, cb) = (a.last_coefficients(), b.last_coefficients());
        for k in 0..3 {
            assert_eq!(ca.scalar(k), cb.scalar(k));
        }
    }

    #[test]
    fn random_sum_uses_realized_count() {
        let model = random_sum_model(CountLaw::Geometric { mean: 4.0 }, noise(1.5, 0.5))
            .unwrap()
            .with_override();
        let key = StreamKey::new(4);
        let (_, diag) = sample_series(&model, key).unwrap();
        let (mut coeff_rng, _) = key.split_roles();
        assert_eq!(
            diag.n_used as u64,
            CountLaw::Geometric { mean: 4.0 }.sample(&mut coeff_rng)
        );
    }

    #[test]
    fn partial_sum_examples() {
        let one = DMatrix::identity(1, 1);
        let pure: Vec<_> = (0..3).map(|_| vec![one.clone()]).collect();
        let CoefficientProcess::PartialSum(b) = partial_sum_coefficients(&pure, 3).unwrap() else {
            panic!()
        };
        assert_eq!(b, vec![one.clone(); 3]);
        let single = vec![vec![
            DMatrix::from_element(1, 1, 2.5),
            DMatrix::from_element(1, 1, 9.0),
        ]];
        let CoefficientProcess::PartialSum(b) = partial_sum_coefficients(&single, 1).unwrap()
        else {
            panic!()
        };
        // A_0 = B_{1,1} = A_{1,0}; A_1 = B_{1,0} = A_{1,1}
        assert_eq!(b[0][(0, 0)], 2.5);
        assert_eq!(b[1][(0, 0)], 9.0);
        let rho = 0.5f64;
        let len = 6;
        let geo: Vec<_> = (0..4)
            .map(|_| {
                (0..len)
                    .map(|j| DMatrix::from_element(1, 1, rho.powi(j)))
                    .collect()
            })
            .collect();
        let CoefficientProcess::PartialSum(b) = partial_sum_coefficients(&geo, 4).unwrap() else {
            panic!()
        };
        for (j, bj) in b.iter().enumerate() {
            let i = 4 - j as i64;
            let expected: f64 = (i.max(1)..=4)
                .filter(|k| k - i < len as i64)
                .map(|k| rho.powi((k - i) as i32))
                .sum();
            assert_relative_eq!(bj[(0, 0)], expected, max_relative = 1e-15);
        }
    }

    #[test]
    fn renewal_unit_arrivals_is_four_term_sum() {
        let model = renewal_reward_integral_model(
            RewardPath::Constant(DMatrix::identity(1, 1)),
            Interarrival::Deterministic(1.0),
            noise(1.5, 0.5),
            4.5,
        )
        .unwrap()
        .with_override();
        let (x, diag) = sample_series(&model, StreamKey::new(3)).unwrap();
        assert_eq!(diag.n_used, 4);
        let (_, mut noise_rng) = StreamKey::new(3).split_roles();
        let direct: f64 = (0..4)
            .map(|_| model.noise().sample_scalar(&mut noise_rng))
            .sum();
        assert_relative_eq!(x[0], direct, max_relative = 1e-14);
    }
}
