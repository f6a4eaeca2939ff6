//! Regularly varying noise laws.
//!
//! Every built-in law is `Z = R * S - m` where `S` is drawn from a finite set
//! of unit directions (the spectral atoms), `R` is uniform on `(0, scale]`
//! with probability `body_mass` and Pareto(alpha) above `scale` otherwise, and
//! `m` is the exact analytic mean when centering is requested. The tail
//! function, truncated moments and the balancing function are all available
//! in closed form (quadrature only for truncated `p`-th moments of centered
//! laws).

mod balancing;
mod radial;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::StreamKey;

pub use balancing::{balancing_h, BalancingFunction};
pub(crate) use radial::Radial;

const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawFamily {
    /// `R * S` in any dimension.
    ParetoPolar,
    /// `eps * R * S` with a Rademacher sign `eps`; one-dimensional.
    SymmetrizedPareto1d,
    /// `R * S - E[R * S]`; one-dimensional, requires `alpha > 1`.
    CenteredPareto1d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanMode {
    #[default]
    None,
    ZeroForced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralAtom {
    pub direction: Vec<f64>,
    pub weight: f64,
}

impl SpectralAtom {
    pub fn new(direction: Vec<f64>, weight: f64) -> Self {
        Self { direction, weight }
    }
}

/// Structured-text record describing a law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    pub family: LawFamily,
    pub alpha: f64,
    pub atoms: Vec<SpectralAtom>,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub mean_mode: MeanMode,
    #[serde(default)]
    pub body_mass: f64,
}

fn one() -> f64 {
    1.0
}

impl LawSpec {
    pub fn build(&self) -> Result<RegVarLaw> {
        RegVarLaw::new(self.alpha, self.atoms.clone(), self.family, self.scale)?
            .with_body_mass(self.body_mass)?
            .with_mean_mode(self.mean_mode)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegVarLaw {
    alpha: f64,
    scale: f64,
    body_mass: f64,
    family: LawFamily,
    mean_mode: MeanMode,
    dim: usize,
    atoms: Vec<SpectralAtom>,
    cumulative: Vec<f64>,
    shift: Vec<f64>,
}

/// Builds a law from its defining parameters; see [`RegVarLaw::new`].
pub fn make_regvar_law(
    alpha: f64,
    atoms: Vec<SpectralAtom>,
    family: LawFamily,
    scale: f64,
) -> Result<RegVarLaw> {
    RegVarLaw::new(alpha, atoms, family, scale)
}

impl RegVarLaw {
    /// Weights are renormalized to sum to one and directions to unit length.
    /// The centered family starts in [`MeanMode::ZeroForced`], the others in
    /// [`MeanMode::None`].
    pub fn new(
        alpha: f64,
        atoms: Vec<SpectralAtom>,
        family: LawFamily,
        scale: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid(format!(
                "alpha must be positive and finite, got {alpha}"
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid(format!(
                "scale must be positive and finite, got {scale}"
            )));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidSpectralMeasure("no atoms".into()));
        }
        let dim = atoms[0].direction.len();
        if dim == 0 {
            return Err(Error::InvalidSpectralMeasure(
                "zero-dimensional direction".into(),
            ));
        }
        let mut total = 0.0;
        for a in &atoms {
            if a.direction.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: a.direction.len(),
                });
            }
            if !(a.weight >= 0.0 && a.weight.is_finite()) {
                return Err(Error::InvalidSpectralMeasure(format!(
                    "bad weight {}",
                    a.weight
                )));
            }
            total += a.weight;
        }
        if total <= 0.0 {
            return Err(Error::InvalidSpectralMeasure("all weights are zero".into()));
        }
        let mut normalized = Vec::with_capacity(atoms.len());
        for a in atoms {
            let norm = a.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::InvalidSpectralMeasure(
                    "direction with zero norm".into(),
                ));
            }
            normalized.push(SpectralAtom {
                direction: a.direction.iter().map(|x| x / norm).collect(),
                weight: a.weight / total,
            });
        }

        let (atoms, mean_mode) = match family {
            LawFamily::ParetoPolar => (normalized, MeanMode::None),
            LawFamily::SymmetrizedPareto1d => {
                if dim != 1 {
                    return Err(invalid("symmetrized-pareto-1d requires dimension 1"));
                }
                let half = |s: f64| SpectralAtom {
                    direction: vec![s],
                    weight: 0.5,
                };
                (vec![half(1.0), half(-1.0)], MeanMode::None)
            }
            LawFamily::CenteredPareto1d => {
                if dim != 1 {
                    return Err(invalid("centered-pareto-1d requires dimension 1"));
                }
                if alpha <= 1.0 {
                    return Err(invalid(
                        "centered-pareto-1d requires alpha > 1 (finite mean)",
                    ));
                }
                (normalized, MeanMode::ZeroForced)
            }
        };

        let mut law = Self {
            alpha,
            scale,
            body_mass: 0.0,
            family,
            mean_mode: MeanMode::None,
            dim,
            cumulative: Vec::new(),
            shift: vec![0.0; dim],
            atoms,
        };
        law.rebuild_cumulative();
        law.with_mean_mode(mean_mode)
    }

    /// Probability that the radius is drawn from the uniform body.
    pub fn with_body_mass(mut self, body_mass: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&body_mass) {
            return Err(invalid(format!(
                "body_mass must lie in [0, 1), got {body_mass}"
            )));
        }
        self.body_mass = body_mass;
        let mode = self.mean_mode;
        self.with_mean_mode(mode)
    }

    /// `ZeroForced` subtracts the exact mean. In dimension > 1 this is only
    /// accepted when the spectral atoms already balance to a zero mean, since
    /// a shifted polar law has no closed-form norm tail.
    pub fn with_mean_mode(mut self, mode: MeanMode) -> Result<Self> {
        if self.family == LawFamily::CenteredPareto1d && mode == MeanMode::None {
            return Err(invalid("centered-pareto-1d is always zero-forced"));
        }
        self.mean_mode = mode;
        self.shift = vec![0.0; self.dim];
        if mode == MeanMode::ZeroForced {
            if self.alpha <= 1.0 {
                return Err(invalid("zero-forced mean requires alpha > 1"));
            }
            let mean = self.uncentered_mean();
            if self.dim > 1 {
                if mean.iter().any(|m| m.abs() > UNIT_TOL) {
                    return Err(invalid(
                        "zero-forced polar law in dimension > 1 needs spectral atoms with zero mean",
                    ));
                }
            } else {
                self.shift = mean;
            }
        }
        Ok(self)
    }

    fn rebuild_cumulative(&mut self) {
        let mut acc = 0.0;
        self.cumulative = self
            .atoms
            .iter()
            .map(|a| {
                acc += a.weight;
                acc
            })
            .collect();
    }

    pub(crate) fn radial(&self) -> Radial {
        Radial {
            alpha: self.alpha,
            scale: self.scale,
            body: self.body_mass,
        }
    }

    fn uncentered_mean(&self) -> Vec<f64> {
        let er = self.radial().mean();
        (0..self.dim)
            .map(|i| {
                er * self
                    .atoms
                    .iter()
                    .map(|a| a.weight * a.direction[i])
                    .sum::<f64>()
            })
            .collect()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn body_mass(&self) -> f64 {
        self.body_mass
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> LawFamily {
        self.family
    }

    pub fn mean_mode(&self) -> MeanMode {
        self.mean_mode
    }

    pub fn atoms(&self) -> &[SpectralAtom] {
        &self.atoms
    }

    /// The vector subtracted from `R * S`.
    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn spec(&self) -> LawSpec {
        LawSpec {
            family: self.family,
            alpha: self.alpha,
            atoms: self.atoms.clone(),
            scale: self.scale,
            mean_mode: self.mean_mode,
            body_mass: self.body_mass,
        }
    }

    /// Population mean, `None` when `alpha <= 1`.
    pub fn population_mean(&self) -> Option<Vec<f64>> {
        if self.alpha <= 1.0 {
            return None;
        }
        Some(
            self.uncentered_mean()
                .iter()
                .zip(&self.shift)
                .map(|(m, s)| m - s)
                .collect(),
        )
    }

    /// True when `alpha > 1` and the population mean is the zero vector.
    pub fn has_zero_mean(&self) -> bool {
        match self.population_mean() {
            Some(m) => {
                let er = self.radial().mean();
                m.iter().all(|x| x.abs() <= UNIT_TOL * er.max(1.0))
            }
            None => false,
        }
    }

    /// Spectral weight `w` of the positive half-line (dimension 1).
    pub fn positive_weight(&self) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.direction[0] > 0.0)
            .map(|a| a.weight)
            .sum()
    }

    /// Exact `P(|Z| > u)` for `u >= scale`.
    pub fn tail_prob(&self, u: f64) -> Result<f64> {
        if !(u >= self.scale) {
            return Err(Error::OutOfDomain {
                value: u,
                lower: self.scale,
            });
        }
        Ok(self.norm_tail(u))
    }

    /// `P(|Z| > u)` for any `u >= 0`.
    pub(crate) fn norm_tail(&self, u: f64) -> f64 {
        if self.shift.iter().all(|&s| s == 0.0) {
            self.radial().survival(u)
        } else {
            self.prob_above(u) + self.prob_below(-u)
        }
    }

    /// Level-`u` with `P(|Z| > u) = level`.
    pub fn tail_quantile(&self, level: f64) -> Result<f64> {
        let top = self.norm_tail(self.scale);
        if !(level > 0.0 && level <= top) {
            return Err(invalid(format!("tail level {level} outside (0, {top}]")));
        }
        if self.shift.iter().all(|&s| s == 0.0) {
            return Ok(self.scale * ((1.0 - self.body_mass) / level).powf(1.0 / self.alpha));
        }
        let (mut lo, mut hi) = (self.scale, self.scale * 2.0);
        while self.norm_tail(hi) > level {
            lo = hi;
            hi *= 2.0;
        }
        while hi - lo > 1e-13 * hi {
            let mid = 0.5 * (lo + hi);
            if self.norm_tail(mid) > level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    fn signed_shift(&self) -> f64 {
        assert_eq!(
            self.dim, 1,
            "signed tail functions need a one-dimensional law"
        );
        self.shift[0]
    }

    /// `P(Y > t)` for the uncentered signed variable `Y = S * R`.
    fn y_above(&self, t: f64) -> f64 {
        let (r, w) = (self.radial(), self.positive_weight());
        if t >= 0.0 {
            w * r.survival(t)
        } else {
            w + (1.0 - w) * r.below(-t)
        }
    }

    /// `P(Y < t)`.
    fn y_below(&self, t: f64) -> f64 {
        let (r, w) = (self.radial(), self.positive_weight());
        if t <= 0.0 {
            (1.0 - w) * r.survival(-t)
        } else {
            (1.0 - w) + w * r.below(t)
        }
    }

    /// `E[Y; Y > t]`.
    fn y_mean_above(&self, t: f64) -> f64 {
        let (r, w) = (self.radial(), self.positive_weight());
        if t >= 0.0 {
            w * r.mean_above(t)
        } else {
            w * r.mean() - (1.0 - w) * r.mean_below(-t)
        }
    }

    /// `E[-Y; Y < t]`.
    fn y_neg_mean_below(&self, t: f64) -> f64 {
        let (r, w) = (self.radial(), self.positive_weight());
        if t <= 0.0 {
            (1.0 - w) * r.mean_above(-t)
        } else {
            (1.0 - w) * r.mean() - w * r.mean_below(t)
        }
    }

    /// Exact `P(Z > t)` (dimension 1).
    pub fn prob_above(&self, t: f64) -> f64 {
        self.y_above(t + self.signed_shift())
    }

    /// Exact `P(Z < t)` (dimension 1).
    pub fn prob_below(&self, t: f64) -> f64 {
        self.y_below(t + self.signed_shift())
    }

    /// `E[Z; Z > x]` (dimension 1).
    pub fn upper_partial_mean(&self, x: f64) -> f64 {
        let m = self.signed_shift();
        self.y_mean_above(x + m) - m * self.y_above(x + m)
    }

    /// `E[|Z|; Z < -t]` (dimension 1).
    pub fn lower_partial_abs_mean(&self, t: f64) -> f64 {
        let m = self.signed_shift();
        self.y_neg_mean_below(m - t) + m * self.y_below(m - t)
    }

    /// Exact `E[|Z|^p; |Z| <= x]` for `x >= scale`.
    pub fn truncated_abs_moment(&self, p: f64, x: f64) -> Result<f64> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(invalid(format!("moment order must be positive, got {p}")));
        }
        if !(x >= self.scale) {
            return Err(Error::OutOfDomain {
                value: x,
                lower: self.scale,
            });
        }
        if self.shift.iter().all(|&s| s == 0.0) {
            return Ok(self.radial().moment_below(p, x));
        }
        Ok(self.centered_truncated_moment(p, x))
    }

    fn centered_truncated_moment(&self, p: f64, x: f64) -> f64 {
        let m = self.signed_shift();
        let r = self.radial();
        let w = self.positive_weight();
        let mut total = 0.0;
        for (sign, weight) in [(1.0, w), (-1.0, 1.0 - w)] {
            if weight == 0.0 {
                continue;
            }
            // |sign * r - m| <= x  <=>  r in [lo, hi]
            let (lo, hi) = if sign > 0.0 {
                (m - x, m + x)
            } else {
                (-m - x, x - m)
            };
            let lo = lo.max(0.0);
            if hi <= lo {
                continue;
            }
            let mut cuts = vec![lo, hi];
            for c in [self.scale, sign * m] {
                if c > lo && c < hi {
                    cuts.push(c);
                }
            }
            cuts.sort_by(f64::total_cmp);
            let f = |t: f64| (sign * t - m).abs().powf(p) * r.density(t);
            for pair in cuts.windows(2) {
                let scale_hint = f(0.5 * (pair[0] + pair[1])).abs() * (pair[1] - pair[0]);
                let tol = 1e-13 * scale_hint.max(1e-300);
                let piece = quadrature::double_exponential::integrate(f, pair[0], pair[1], tol);
                total += weight * piece.integral;
            }
        }
        total
    }

    /// `alpha / (p - alpha) * x^p * P(|Z| > x)`, the large-`x` equivalent of
    /// [`Self::truncated_abs_moment`] when `p > alpha`.
    pub fn karamata_asymptote(&self, p: f64, x: f64) -> Result<f64> {
        if !(p > self.alpha) {
            return Err(invalid(format!(
                "order p = {p} must exceed alpha = {} for a tail-dominated moment",
                self.alpha
            )));
        }
        let tail = self.tail_prob(x)?;
        Ok(self.alpha / (p - self.alpha) * x.powf(p) * tail)
    }

    /// Writes one draw into `out` (length `dim`).
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let atom = self.pick_atom(rng);
        let radius = self.radial().sample(rng);
        for ((o, s), m) in out.iter_mut().zip(&atom.direction).zip(&self.shift) {
            *o = radius * s - m;
        }
    }

    /// One draw of a one-dimensional law.
    pub fn sample_scalar<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let atom = self.pick_atom(rng);
        self.radial().sample(rng) * atom.direction[0] - self.shift[0]
    }

    fn pick_atom<R: Rng + ?Sized>(&self, rng: &mut R) -> &SpectralAtom {
        if self.atoms.len() == 1 {
            return &self.atoms[0];
        }
        let u: f64 = rng.random();
        let idx = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.atoms.len() - 1);
        &self.atoms[idx]
    }

    /// `n` i.i.d. draws from the stream named by `key`.
    pub fn sample(&self, key: StreamKey, n: usize) -> Vec<DVector<f64>> {
        let mut rng = key.rng();
        let mut buf = vec![0.0; self.dim];
        (0..n)
            .map(|_| {
                self.sample_into(&mut rng, &mut buf);
                DVector::from_column_slice(&buf)
            })
            .collect()
    }
}
