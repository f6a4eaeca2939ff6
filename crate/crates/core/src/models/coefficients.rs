use nalgebra::{DMatrix, DMatrixView};
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::models::count::CountLaw;
use crate::models::matrix_law::{pow0, MatrixLaw};
use crate::models::op_norm;

/// Which of the structural model families a coefficient process belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientKind {
    Deterministic,
    IidRandom,
    SreProduct,
    RandomSumIndicator,
    PartialSum,
    RenewalReward,
}

/// A value that is known exactly, only bounded from above, or not known
/// without simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Envelope {
    Exact(f64),
    Upper(f64),
    Unknown,
}

impl Envelope {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Envelope::Exact(v) | Envelope::Upper(v) => Some(v),
            Envelope::Unknown => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Envelope::Exact(_))
    }

    fn map(self, f: impl Fn(f64) -> f64) -> Self {
        match self {
            Envelope::Exact(v) => Envelope::Exact(f(v)),
            Envelope::Upper(v) => Envelope::Upper(f(v)),
            Envelope::Unknown => Envelope::Unknown,
        }
    }
}

/// Deterministic coefficient sequences with closed-form norm sums.
#[derive(Debug, Clone, PartialEq)]
pub enum DeterministicSequence {
    Finite(Vec<DMatrix<f64>>),
    /// `A_j = ratio^j * first`.
    Geometric {
        first: DMatrix<f64>,
        ratio: f64,
    },
    /// `A_j = (j + 1)^(-exponent) * first`.
    PowerLaw {
        first: DMatrix<f64>,
        exponent: f64,
    },
}

impl DeterministicSequence {
    pub fn scalars(values: &[f64]) -> Self {
        DeterministicSequence::Finite(
            values
                .iter()
                .map(|&v| DMatrix::from_element(1, 1, v))
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |m: &DMatrix<f64>| !m.is_empty() && m.iter().all(|v| v.is_finite());
        match self {
            DeterministicSequence::Finite(list) => {
                if list.is_empty() {
                    return Err(invalid("coefficient list must be nonempty"));
                }
                let shape = list[0].shape();
                if list.iter().any(|m| m.shape() != shape || !finite(m)) {
                    return Err(invalid("coefficients must be finite and share one shape"));
                }
            }
            DeterministicSequence::Geometric { first, ratio } => {
                if !finite(first) || !ratio.is_finite() {
                    return Err(invalid("geometric coefficients must be finite"));
                }
            }
            DeterministicSequence::PowerLaw { first, exponent } => {
                if !finite(first) || !(exponent.is_finite() && *exponent >= 0.0) {
                    return Err(invalid(
                        "power-law coefficients need a finite exponent >= 0",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            DeterministicSequence::Finite(list) => list[0].shape(),
            DeterministicSequence::Geometric { first, .. }
            | DeterministicSequence::PowerLaw { first, .. } => first.shape(),
        }
    }

    /// Number of coefficients, `None` for infinite sequences.
    pub fn len(&self) -> Option<usize> {
        match self {
            DeterministicSequence::Finite(list) => Some(list.len()),
            _ => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    pub fn matrix(&self, j: usize) -> DMatrix<f64> {
        match self {
            DeterministicSequence::Finite(list) => list
                .get(j)
                .cloned()
                .unwrap_or_else(|| DMatrix::zeros(list[0].nrows(), list[0].ncols())),
            DeterministicSequence::Geometric { first, ratio } => first * ratio.powi(j as i32),
            DeterministicSequence::PowerLaw { first, exponent } => {
                first * ((j + 1) as f64).powf(-exponent)
            }
        }
    }

    pub fn norm(&self, j: usize) -> f64 {
        match self {
            DeterministicSequence::Finite(list) => list.get(j).map_or(0.0, op_norm),
            DeterministicSequence::Geometric { first, ratio } => {
                op_norm(first) * ratio.abs().powi(j as i32)
            }
            DeterministicSequence::PowerLaw { first, exponent } => {
                op_norm(first) * ((j + 1) as f64).powf(-exponent)
            }
        }
    }

    /// `sum_{j >= n} ||A_j||^q`, infinite when divergent.
    pub fn tail_sum_pow(&self, q: f64, n: usize) -> f64 {
        match self {
            DeterministicSequence::Finite(list) => list
                .iter()
                .skip(n)
                .map(op_norm)
                .filter(|&v| v > 0.0)
                .map(|v| v.powf(q))
                .sum(),
            DeterministicSequence::Geometric { first, ratio } => {
                let c = op_norm(first);
                if c == 0.0 {
                    return 0.0;
                }
                let r = ratio.abs().powf(q);
                if r >= 1.0 {
                    return f64::INFINITY;
                }
                c.powf(q) * r.powi(n as i32) / (1.0 - r)
            }
            DeterministicSequence::PowerLaw { first, exponent } => {
                let c = op_norm(first);
                if c == 0.0 {
                    return 0.0;
                }
                c.powf(q) * hurwitz_zeta(q * exponent, (n + 1) as f64)
            }
        }
    }

    pub fn sum_pow(&self, q: f64) -> f64 {
        self.tail_sum_pow(q, 0)
    }

    pub fn all_zero(&self) -> bool {
        match self {
            DeterministicSequence::Finite(list) => list.iter().all(|m| m.iter().all(|v| *v == 0.0)),
            DeterministicSequence::Geometric { first, .. }
            | DeterministicSequence::PowerLaw { first, .. } => first.iter().all(|v| *v == 0.0),
        }
    }
}

/// `zeta(s, a) = sum_{k >= 0} (a + k)^(-s)`; infinite for `s <= 1`.
pub(crate) fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    if s <= 1.0 {
        return f64::INFINITY;
    }
    const DIRECT: usize = 16;
    let direct: f64 = (0..DIRECT).map(|k| (a + k as f64).powf(-s)).sum();
    // Euler-Maclaurin remainder at N = a + DIRECT
    let n = a + DIRECT as f64;
    let np = n.powf(-s);
    let mut tail = n * np / (s - 1.0) + 0.5 * np;
    // B_2 / 2!, B_4 / 4!, B_6 / 6!, B_8 / 8!
    const COEF: [f64; 4] = [1.0 / 12.0, -1.0 / 720.0, 1.0 / 30240.0, -1.0 / 1209600.0];
    let mut rising = s;
    let mut power = np / n;
    for (k, c) in COEF.iter().enumerate() {
        tail += c * rising * power;
        let m = 2 * k + 1;
        rising *= (s + m as f64) * (s + m as f64 + 1.0);
        power /= n * n;
    }
    direct + tail
}

/// Deterministic reward paths for the renewal construction.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardPath {
    Constant(DMatrix<f64>),
    /// `H(t) = exp(-rate * t) * base` with `rate >= 0`.
    ExpDecay {
        base: DMatrix<f64>,
        rate: f64,
    },
}

impl RewardPath {
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        match self {
            RewardPath::Constant(m) => m.clone(),
            RewardPath::ExpDecay { base, rate } => base * (-rate * t).exp(),
        }
    }

    fn base(&self) -> &DMatrix<f64> {
        match self {
            RewardPath::Constant(m) | RewardPath::ExpDecay { base: m, .. } => m,
        }
    }

    fn decay(&self) -> f64 {
        match self {
            RewardPath::Constant(_) => 0.0,
            RewardPath::ExpDecay { rate, .. } => *rate,
        }
    }
}

/// Interarrival laws of the renewal process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interarrival {
    Deterministic(f64),
    Exponential { rate: f64 },
    Uniform { low: f64, high: f64 },
}

impl Interarrival {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Interarrival::Deterministic(h) => h > 0.0 && h.is_finite(),
            Interarrival::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Interarrival::Uniform { low, high } => low >= 0.0 && high > low && high.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid interarrival law {self:?}")))
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Interarrival::Deterministic(h) => h,
            Interarrival::Exponential { rate } => Exp::new(rate).expect("validated").sample(rng),
            Interarrival::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Interarrival::Deterministic(h) => h,
            Interarrival::Exponential { rate } => 1.0 / rate,
            Interarrival::Uniform { low, high } => 0.5 * (low + high),
        }
    }
}

/// `E N^q` for `N ~ Poisson(lambda)`.
fn poisson_moment(lambda: f64, q: f64) -> f64 {
    let mut total = 0.0;
    let mut log_mass = -lambda;
    let mut n = 1.0f64;
    loop {
        log_mass += lambda.ln() - n.ln();
        let term = (log_mass + q * n.ln()).exp();
        total += term;
        if n > lambda + 10.0 && term < 1e-17 * total.max(f64::MIN_POSITIVE) {
            return total;
        }
        n += 1.0;
    }
}

/// The random or deterministic sequence `(A_j)` of a series model.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientProcess {
    Deterministic(DeterministicSequence),
    /// `A_j = weights[j] * M_j` with i.i.d. `M_j`.
    IidRandom {
        weights: Vec<f64>,
        law: MatrixLaw,
    },
    /// `A_0 = Id`, `A_j = M_0 M_{-1} ... M_{-j+1}` with i.i.d. `M`.
    SreProduct {
        law: MatrixLaw,
    },
    /// `A_j = Id * 1{1 <= j <= N}`.
    RandomSum {
        count: CountLaw,
        dim: usize,
    },
    /// Finite deterministic list emitted from a triangular schedule.
    PartialSum(Vec<DMatrix<f64>>),
    /// `A_j = H(tau_j) * 1{1 <= j <= N_T}` for renewal times `tau_j`.
    RenewalReward {
        path: RewardPath,
        interarrival: Interarrival,
        horizon: f64,
    },
}

/// One realization of `(A_j)` on indices `first .. first + len`.
#[derive(Debug, Clone, Default)]
pub struct CoefficientDraw {
    pub first: usize,
    pub len: usize,
    pub rows: usize,
    pub cols: usize,
    /// Every emitted coefficient is the identity and `data` is unused.
    pub identity_run: bool,
    data: Vec<f64>,
}

impl CoefficientDraw {
    fn reset(&mut self, first: usize, rows: usize, cols: usize, identity_run: bool) {
        self.first = first;
        self.len = 0;
        self.rows = rows;
        self.cols = cols;
        self.identity_run = identity_run;
        self.data.clear();
    }

    fn push(&mut self, m: &DMatrix<f64>) {
        self.data.extend_from_slice(m.as_slice());
        self.len += 1;
    }

    /// Column-major entries of the `k`-th emitted coefficient.
    pub fn entries(&self, k: usize) -> &[f64] {
        let size = self.rows * self.cols;
        &self.data[k * size..(k + 1) * size]
    }

    pub fn matrix(&self, k: usize) -> DMatrix<f64> {
        if self.identity_run {
            DMatrix::identity(self.rows, self.cols)
        } else {
            DMatrixView::from_slice(self.entries(k), self.rows, self.cols).into_owned()
        }
    }

    /// The `k`-th coefficient of a 1x1 process.
    pub fn scalar(&self, k: usize) -> f64 {
        if self.identity_run {
            1.0
        } else {
            self.data[k * self.rows * self.cols]
        }
    }

    pub fn norm(&self, k: usize) -> f64 {
        if self.identity_run {
            1.0
        } else {
            op_norm(&self.matrix(k))
        }
    }

    /// `sum_k ||A_k||^q` over the realization.
    pub fn sum_norm_pow(&self, q: f64) -> f64 {
        if self.identity_run {
            return self.len as f64;
        }
        (0..self.len)
            .map(|k| self.norm(k))
            .filter(|&v| v > 0.0)
            .map(|v| v.powf(q))
            .sum()
    }

    /// `x += A_k z`.
    pub fn apply_add(&self, k: usize, z: &[f64], x: &mut [f64]) {
        if self.identity_run {
            for (xi, zi) in x.iter_mut().zip(z) {
                *xi += zi;
            }
            return;
        }
        let a = self.entries(k);
        for (c, zc) in z.iter().enumerate() {
            if *zc == 0.0 {
                continue;
            }
            let col = &a[c * self.rows..(c + 1) * self.rows];
            for (xi, aic) in x.iter_mut().zip(col) {
                *xi += aic * zc;
            }
        }
    }
}

impl CoefficientProcess {
    pub fn validate(&self) -> Result<()> {
        match self {
            CoefficientProcess::Deterministic(seq) => seq.validate(),
            CoefficientProcess::IidRandom { weights, law } => {
                if weights.is_empty() || weights.iter().any(|w| !w.is_finite()) {
                    return Err(invalid(
                        "iid coefficient weights must be finite and nonempty",
                    ));
                }
                law.validate()
            }
            CoefficientProcess::SreProduct { law } => {
                law.validate()?;
                let (r, c) = law.shape();
                if r != c {
                    return Err(invalid("recurrence matrices must be square"));
                }
                Ok(())
            }
            CoefficientProcess::RandomSum { count, dim } => {
                if *dim == 0 {
                    return Err(invalid("random sum dimension must be positive"));
                }
                count.validate()
            }
            CoefficientProcess::PartialSum(list) => {
                DeterministicSequence::Finite(list.clone()).validate()
            }
            CoefficientProcess::RenewalReward {
                path,
                interarrival,
                horizon,
            } => {
                if !(*horizon > 0.0 && horizon.is_finite()) {
                    return Err(invalid(format!(
                        "renewal horizon T must be positive, got {horizon}"
                    )));
                }
                if path.decay() < 0.0 || path.base().iter().any(|v| !v.is_finite()) {
                    return Err(invalid("reward path must be finite with nonnegative decay"));
                }
                interarrival.validate()
            }
        }
    }

    pub fn kind(&self) -> CoefficientKind {
        match self {
            CoefficientProcess::Deterministic(_) => CoefficientKind::Deterministic,
            CoefficientProcess::IidRandom { .. } => CoefficientKind::IidRandom,
            CoefficientProcess::SreProduct { .. } => CoefficientKind::SreProduct,
            CoefficientProcess::RandomSum { .. } => CoefficientKind::RandomSumIndicator,
            CoefficientProcess::PartialSum(_) => CoefficientKind::PartialSum,
            CoefficientProcess::RenewalReward { .. } => CoefficientKind::RenewalReward,
        }
    }

    /// `(d, p)`: coefficients map `R^p` to `R^d`.
    pub fn shape(&self) -> (usize, usize) {
        match self {
            CoefficientProcess::Deterministic(seq) => seq.shape(),
            CoefficientProcess::IidRandom { law, .. } | CoefficientProcess::SreProduct { law } => {
                law.shape()
            }
            CoefficientProcess::RandomSum { dim, .. } => (*dim, *dim),
            CoefficientProcess::PartialSum(list) => list[0].shape(),
            CoefficientProcess::RenewalReward { path, .. } => path.base().shape(),
        }
    }

    pub fn predictability_note(&self) -> &'static str {
        match self {
            CoefficientProcess::Deterministic(_) | CoefficientProcess::PartialSum(_) => {
                "deterministic coefficients; trivially predictable"
            }
            CoefficientProcess::IidRandom { .. } => {
                "coefficients drawn from their own stream, independent of all noise"
            }
            CoefficientProcess::SreProduct { .. } => {
                "A_j uses M_0..M_{-j+1} only, drawn from the coefficient stream; Z_j = W_{-j} from the noise stream"
            }
            CoefficientProcess::RandomSum { .. } => {
                "N drawn from the coefficient stream, independent of the noise: a stopping time for any filtration"
            }
            CoefficientProcess::RenewalReward { .. } => {
                "renewal times drawn from the coefficient stream, independent of the jumps; H is deterministic"
            }
        }
    }

    /// True when every realization is finite (without truncation).
    pub fn is_finite_support(&self) -> bool {
        !matches!(
            self,
            CoefficientProcess::SreProduct { .. }
                | CoefficientProcess::Deterministic(DeterministicSequence::Geometric { .. })
                | CoefficientProcess::Deterministic(DeterministicSequence::PowerLaw { .. })
        )
    }

    /// True when the sequence carries no randomness.
    pub fn is_deterministic(&self) -> bool {
        match self {
            CoefficientProcess::Deterministic(_) | CoefficientProcess::PartialSum(_) => true,
            CoefficientProcess::SreProduct { law } => matches!(law, MatrixLaw::Constant(_)),
            CoefficientProcess::IidRandom { law, .. } => matches!(law, MatrixLaw::Constant(_)),
            CoefficientProcess::RandomSum { count, .. } => matches!(count, CountLaw::Constant(_)),
            CoefficientProcess::RenewalReward { interarrival, .. } => {
                matches!(interarrival, Interarrival::Deterministic(_))
            }
        }
    }

    /// The deterministic sequence, if the process has no randomness.
    pub fn as_deterministic(&self) -> Option<DeterministicSequence> {
        match self {
            CoefficientProcess::Deterministic(seq) => Some(seq.clone()),
            CoefficientProcess::PartialSum(list) => {
                Some(DeterministicSequence::Finite(list.clone()))
            }
            CoefficientProcess::SreProduct {
                law: MatrixLaw::Constant(m),
            } => {
                if m.shape() == (1, 1) {
                    Some(DeterministicSequence::Geometric {
                        first: DMatrix::identity(1, 1),
                        ratio: m[(0, 0)],
                    })
                } else {
                    None
                }
            }
            CoefficientProcess::IidRandom {
                weights,
                law: MatrixLaw::Constant(m),
            } => Some(DeterministicSequence::Finite(
                weights.iter().map(|w| m * *w).collect(),
            )),
            CoefficientProcess::RandomSum {
                count: CountLaw::Constant(n),
                dim,
            } => {
                let mut list = vec![DMatrix::zeros(*dim, *dim)];
                list.extend((0..*n).map(|_| DMatrix::identity(*dim, *dim)));
                Some(DeterministicSequence::Finite(list))
            }
            CoefficientProcess::RenewalReward {
                path,
                interarrival: Interarrival::Deterministic(h),
                horizon,
            } => {
                let count = (horizon / h + 1e-12).floor() as usize;
                let (r, c) = path.base().shape();
                let mut list = vec![DMatrix::zeros(r, c)];
                list.extend((1..=count).map(|j| path.at(j as f64 * h)));
                Some(DeterministicSequence::Finite(list))
            }
            _ => None,
        }
    }

    /// `P(A_j = 0 for all j)`.
    pub fn prob_all_zero(&self) -> f64 {
        if let Some(seq) = self.as_deterministic() {
            return f64::from(u8::from(seq.all_zero()));
        }
        match self {
            CoefficientProcess::IidRandom { weights, law } => {
                let p0 = law.prob_zero();
                weights
                    .iter()
                    .map(|w| if *w == 0.0 { 1.0 } else { p0 })
                    .product()
            }
            CoefficientProcess::SreProduct { .. } | CoefficientProcess::RandomSum { .. } => 0.0,
            CoefficientProcess::RenewalReward {
                path,
                interarrival,
                horizon,
            } => {
                if path.base().iter().all(|v| *v == 0.0) {
                    return 1.0;
                }
                match *interarrival {
                    Interarrival::Exponential { rate } => (-rate * horizon).exp(),
                    Interarrival::Uniform { low, high } => {
                        ((high - horizon) / (high - low)).clamp(0.0, 1.0)
                    }
                    Interarrival::Deterministic(_) => unreachable!("handled as deterministic"),
                }
            }
            _ => unreachable!("deterministic variants handled above"),
        }
    }

    /// `E ||A_j||^q`.
    pub fn norm_moment(&self, j: usize, q: f64) -> Envelope {
        if let Some(seq) = self.as_deterministic() {
            return Envelope::Exact(pow0(seq.norm(j), q));
        }
        match self {
            CoefficientProcess::IidRandom { weights, law } => Envelope::Exact(
                weights
                    .get(j)
                    .map_or(0.0, |w| pow0(w.abs(), q) * law.norm_moment(q)),
            ),
            CoefficientProcess::SreProduct { law } => {
                let m = law.norm_moment(q).powi(j as i32);
                if law.is_scalar() {
                    Envelope::Exact(m)
                } else {
                    Envelope::Upper(m)
                }
            }
            CoefficientProcess::RandomSum { count, .. } => Envelope::Exact(if j == 0 {
                0.0
            } else {
                count.survival(j as f64 - 1.0)
            }),
            CoefficientProcess::RenewalReward { .. } => Envelope::Unknown,
            _ => unreachable!("deterministic variants handled above"),
        }
    }

    /// `sum_{j >= n} E ||A_j||^q`.
    pub fn tail_sum_norm_moment(&self, q: f64, n: usize) -> Envelope {
        if let Some(seq) = self.as_deterministic() {
            return Envelope::Exact(seq.tail_sum_pow(q, n));
        }
        match self {
            CoefficientProcess::IidRandom { weights, law } => {
                let mq = law.norm_moment(q);
                Envelope::Exact(
                    weights
                        .iter()
                        .skip(n)
                        .filter(|w| **w != 0.0)
                        .map(|w| w.abs().powf(q) * mq)
                        .sum(),
                )
            }
            CoefficientProcess::SreProduct { law } => {
                let m = law.norm_moment(q);
                let v = if m >= 1.0 {
                    f64::INFINITY
                } else {
                    m.powi(n as i32) / (1.0 - m)
                };
                if law.is_scalar() {
                    Envelope::Exact(v)
                } else {
                    Envelope::Upper(v)
                }
            }
            CoefficientProcess::RandomSum { count, .. } => {
                // sum_{j >= max(n, 1)} P(N >= j) = E (N - max(n, 1) + 1)^+
                if n <= 1 {
                    Envelope::Exact(count.mean())
                } else {
                    let mut v = 0.0;
                    let mut j = n;
                    let mut guard = 0;
                    let mean = count.mean();
                    if mean.is_infinite() {
                        return Envelope::Exact(f64::INFINITY);
                    }
                    loop {
                        let s = count.survival(j as f64 - 1.0);
                        v += s;
                        j += 1;
                        guard += 1;
                        if s < 1e-16 * v.max(1e-300) || guard > 10_000_000 {
                            break;
                        }
                    }
                    Envelope::Exact(v)
                }
            }
            CoefficientProcess::RenewalReward {
                path,
                interarrival,
                horizon,
            } => {
                if n > 1 {
                    return Envelope::Unknown;
                }
                self.renewal_sum(path, interarrival, *horizon, q)
            }
            _ => unreachable!("deterministic variants handled above"),
        }
    }

    /// `sum_j E ||A_j||^q`.
    pub fn sum_norm_moment(&self, q: f64) -> Envelope {
        self.tail_sum_norm_moment(q, 0)
    }

    fn renewal_sum(
        &self,
        path: &RewardPath,
        interarrival: &Interarrival,
        horizon: f64,
        q: f64,
    ) -> Envelope {
        let c = pow0(op_norm(path.base()), q);
        match *interarrival {
            Interarrival::Exponential { rate } => {
                // Campbell: E sum_j g(tau_j) = rate * int_0^T g(t) dt
                let k = q * path.decay();
                let integral = if k == 0.0 {
                    horizon
                } else {
                    (1.0 - (-k * horizon).exp()) / k
                };
                Envelope::Exact(c * rate * integral)
            }
            Interarrival::Uniform { low, .. } if low > 0.0 => {
                Envelope::Upper(c * (horizon / low).floor())
            }
            _ => Envelope::Unknown,
        }
    }

    /// `E (sum_j ||A_j||^a)^b` for `b >= 1`: exact when the law of the sum is
    /// explicit, otherwise the Minkowski bound
    /// `(sum_j (E ||A_j||^(ab))^(1/b))^b`.
    pub fn composite_moment(&self, a: f64, b: f64) -> Envelope {
        if let Some(seq) = self.as_deterministic() {
            return Envelope::Exact(seq.sum_pow(a).powf(b));
        }
        match self {
            CoefficientProcess::IidRandom { weights, law } => {
                let m = law.norm_moment(a * b).powf(1.0 / b);
                let s: f64 = weights
                    .iter()
                    .filter(|w| **w != 0.0)
                    .map(|w| w.abs().powf(a) * m)
                    .sum();
                if weights.iter().filter(|w| **w != 0.0).count() <= 1 {
                    Envelope::Exact(s.powf(b))
                } else {
                    Envelope::Upper(s.powf(b))
                }
            }
            CoefficientProcess::SreProduct { law } => {
                // E ||A_j||^(ab) <= (E ||M||^(ab))^j by submultiplicativity and independence
                let r = law.norm_moment(a * b).powf(1.0 / b);
                if r >= 1.0 {
                    return Envelope::Upper(f64::INFINITY);
                }
                Envelope::Upper((1.0 / (1.0 - r)).powf(b))
            }
            CoefficientProcess::RandomSum { count, .. } => Envelope::Exact(count.moment(b)),
            CoefficientProcess::RenewalReward {
                path,
                interarrival,
                horizon,
            } => {
                let c = pow0(op_norm(path.base()), a * b);
                match *interarrival {
                    Interarrival::Exponential { rate } => {
                        let v = c * poisson_moment(rate * horizon, b);
                        if path.decay() == 0.0 {
                            Envelope::Exact(v)
                        } else {
                            Envelope::Upper(v)
                        }
                    }
                    Interarrival::Uniform { low, .. } if low > 0.0 => {
                        Envelope::Upper(c * (horizon / low).floor().powf(b))
                    }
                    _ => Envelope::Unknown,
                }
            }
            _ => unreachable!("deterministic variants handled above"),
        }
        .map(|v| if v.is_nan() { f64::INFINITY } else { v })
    }

    /// Remainder exponent `q` and the power of the budget it is compared to:
    /// `sum_{j >= n} E||A_j||^q <= delta^power`.
    pub(crate) fn truncation_exponent(alpha: f64, epsilon: f64) -> (f64, i32) {
        if alpha > 2.0 {
            (2.0, 2)
        } else {
            (alpha - epsilon, 1)
        }
    }

    /// Draws one realization. Infinite processes emit `A_0 .. A_{horizon-1}`;
    /// finite ones ignore `horizon`.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        horizon: usize,
        out: &mut CoefficientDraw,
    ) {
        let (rows, cols) = self.shape();
        match self {
            CoefficientProcess::Deterministic(seq) => {
                out.reset(0, rows, cols, false);
                let n = seq.len().unwrap_or(horizon);
                for j in 0..n {
                    out.push(&seq.matrix(j));
                }
            }
            CoefficientProcess::PartialSum(list) => {
                out.reset(0, rows, cols, false);
                for m in list {
                    out.push(m);
                }
            }
            CoefficientProcess::IidRandom { weights, law } => {
                out.reset(0, rows, cols, false);
                for w in weights {
                    let m = law.sample(rng) * *w;
                    out.push(&m);
                }
            }
            CoefficientProcess::SreProduct { law } => {
                out.reset(0, rows, cols, false);
                let mut running = DMatrix::identity(rows, cols);
                for j in 0..horizon {
                    out.push(&running);
                    if j + 1 < horizon {
                        running = &running * law.sample(rng);
                    }
                }
            }
            CoefficientProcess::RandomSum { count, .. } => {
                out.reset(1, rows, cols, true);
                out.len = count.sample(rng) as usize;
            }
            CoefficientProcess::RenewalReward {
                path,
                interarrival,
                horizon,
            } => {
                out.reset(1, rows, cols, false);
                let mut t = interarrival.sample(rng);
                while t <= *horizon {
                    out.push(&path.at(t));
                    t += interarrival.sample(rng);
                }
            }
        }
    }
}
