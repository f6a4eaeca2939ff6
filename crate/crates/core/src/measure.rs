//! Alpha-homogeneous limit measures with a discrete spectral part.
//!
//! A measure is a list of atoms `(s_i, c_i)` and stands for
//! `sum_i c_i * (alpha r^(-alpha-1) dr) x delta_{s_i}` in polar coordinates,
//! so every evaluation on a [`TailSet`] is a finite sum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::law::RegVarLaw;

const TIE_TOL: f64 = 1e-12;
const ALPHA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureAtom {
    pub direction: Vec<f64>,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitMeasure {
    pub alpha: f64,
    pub dim: usize,
    pub atoms: Vec<MeasureAtom>,
    /// Atoms mapped to the origin by a pushforward and dropped.
    #[serde(default)]
    pub dropped: usize,
}

/// A spherical cap `{s : <s, center> > min_cos}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cap {
    pub center: Vec<f64>,
    pub min_cos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    WholeSphere,
    /// Union of caps.
    Caps(Vec<Cap>),
}

/// `{x : |x| > radius, x/|x| in region}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSet {
    pub radius: f64,
    pub region: Region,
}

impl TailSet {
    pub fn new(radius: f64, region: Region) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid(format!(
                "tail set radius must be positive, got {radius}"
            )));
        }
        let region = match region {
            Region::WholeSphere => Region::WholeSphere,
            Region::Caps(caps) => {
                if caps.is_empty() {
                    return Err(invalid("cap list is empty"));
                }
                let dim = caps[0].center.len();
                let mut out = Vec::with_capacity(caps.len());
                for c in caps {
                    if c.center.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: c.center.len(),
                        });
                    }
                    if !(-1.0..=1.0).contains(&c.min_cos) {
                        return Err(invalid(format!(
                            "cap min_cos {} outside [-1, 1]",
                            c.min_cos
                        )));
                    }
                    let n = c.center.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if !(n > 0.0 && n.is_finite()) {
                        return Err(invalid("cap center has zero norm"));
                    }
                    out.push(Cap {
                        center: c.center.iter().map(|x| x / n).collect(),
                        min_cos: c.min_cos,
                    });
                }
                Region::Caps(out)
            }
        };
        Ok(Self { radius, region })
    }

    /// `{|x| > u}`.
    pub fn norm_exceeds(u: f64) -> Result<Self> {
        Self::new(u, Region::WholeSphere)
    }

    /// The ray `(u, inf)` in dimension 1.
    pub fn ray_above(u: f64) -> Result<Self> {
        Self::new(
            u,
            Region::Caps(vec![Cap {
                center: vec![1.0],
                min_cos: 0.0,
            }]),
        )
    }

    /// The ray `(-inf, -u)` in dimension 1.
    pub fn ray_below(u: f64) -> Result<Self> {
        Self::new(
            u,
            Region::Caps(vec![Cap {
                center: vec![-1.0],
                min_cos: 0.0,
            }]),
        )
    }

    /// A single cone `{|x| > u, <x/|x|, center> > min_cos}`.
    pub fn cone(u: f64, center: Vec<f64>, min_cos: f64) -> Result<Self> {
        Self::new(u, Region::Caps(vec![Cap { center, min_cos }]))
    }

    /// `u * B`.
    pub fn scaled(&self, u: f64) -> Self {
        Self {
            radius: self.radius * u,
            region: self.region.clone(),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match &self.region {
            Region::WholeSphere => None,
            Region::Caps(c) => Some(c[0].center.len()),
        }
    }

    /// Direction test for a unit vector; errors if it lies on a cap boundary.
    pub fn contains_direction(&self, s: &[f64]) -> Result<bool> {
        match &self.region {
            Region::WholeSphere => Ok(true),
            Region::Caps(caps) => {
                let mut inside = false;
                for c in caps {
                    if c.center.len() != s.len() {
                        return Err(Error::DimensionMismatch {
                            expected: s.len(),
                            got: c.center.len(),
                        });
                    }
                    let cos: f64 = c.center.iter().zip(s).map(|(a, b)| a * b).sum();
                    if (cos - c.min_cos).abs() <= TIE_TOL {
                        return Err(Error::CapBoundaryTie(cos));
                    }
                    inside |= cos > c.min_cos;
                }
                Ok(inside)
            }
        }
    }

    /// Membership of a point; boundaries have probability zero under the
    /// simulated laws and are treated as outside.
    pub fn contains(&self, x: &[f64]) -> bool {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if !(r2 > self.radius * self.radius) {
            return false;
        }
        match &self.region {
            Region::WholeSphere => true,
            Region::Caps(caps) => {
                let r = r2.sqrt();
                caps.iter().any(|c| {
                    c.center.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() > c.min_cos * r
                })
            }
        }
    }

    /// Membership of a scalar point (dimension 1).
    pub fn contains_scalar(&self, x: f64) -> bool {
        if !(x.abs() > self.radius) {
            return false;
        }
        match &self.region {
            Region::WholeSphere => true,
            Region::Caps(caps) => caps.iter().any(|c| c.center[0] * x.signum() > c.min_cos),
        }
    }
}

impl LimitMeasure {
    pub fn new(alpha: f64, atoms: Vec<MeasureAtom>) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid(format!("alpha must be positive, got {alpha}")));
        }
        let dim = atoms.first().map(|a| a.direction.len()).ok_or_else(|| {
            Error::InvalidSpectralMeasure("a limit measure needs at least one atom".into())
        })?;
        for a in &atoms {
            if a.direction.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: a.direction.len(),
                });
            }
            if !(a.mass >= 0.0 && a.mass.is_finite()) {
                return Err(Error::InvalidSpectralMeasure(format!(
                    "bad mass {}",
                    a.mass
                )));
            }
            let n = a.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidSpectralMeasure(
                    "atom direction is not a unit vector".into(),
                ));
            }
        }
        Ok(Self {
            alpha,
            dim,
            atoms,
            dropped: 0,
        })
    }

    /// The null measure.
    pub fn null(alpha: f64, dim: usize) -> Self {
        Self {
            alpha,
            dim,
            atoms: Vec::new(),
            dropped: 0,
        }
    }

    /// The limit measure of a law: total mass one on `{|x| > 1}`.
    pub fn from_law(law: &RegVarLaw) -> Self {
        Self {
            alpha: law.alpha(),
            dim: law.dim(),
            atoms: law
                .atoms()
                .iter()
                .map(|a| MeasureAtom {
                    direction: a.direction.clone(),
                    mass: a.weight,
                })
                .collect(),
            dropped: 0,
        }
    }

    /// Mass of `{|x| > 1}`.
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    fn check_dim(&self, b: &TailSet) -> Result<()> {
        match b.dim() {
            Some(d) if d != self.dim => Err(Error::DimensionMismatch {
                expected: self.dim,
                got: d,
            }),
            _ => Ok(()),
        }
    }

    /// `mu(B) = sum_i c_i u^(-alpha) 1{s_i in region}`.
    pub fn eval(&self, b: &TailSet) -> Result<f64> {
        self.check_dim(b)?;
        let radial = b.radius.powf(-self.alpha);
        let mut total = 0.0;
        for a in &self.atoms {
            if b.contains_direction(&a.direction)? {
                total += a.mass * radial;
            }
        }
        Ok(total)
    }

    /// Image measure `mu o A^{-1}`: atom `(s, c)` becomes
    /// `(As/|As|, c |As|^alpha)`; atoms with `As = 0` are dropped.
    pub fn pushforward(&self, a: &DMatrix<f64>) -> Result<Self> {
        if a.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: a.ncols(),
            });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(invalid("pushforward matrix has non-finite entries"));
        }
        let mut atoms = Vec::with_capacity(self.atoms.len());
        let mut dropped = self.dropped;
        for atom in &self.atoms {
            let v = a * DVector::from_column_slice(&atom.direction);
            let n = v.norm();
            if n == 0.0 {
                dropped += 1;
                continue;
            }
            atoms.push(MeasureAtom {
                direction: v.iter().map(|x| x / n).collect(),
                mass: atom.mass * n.powf(self.alpha),
            });
        }
        Ok(Self {
            alpha: self.alpha,
            dim: a.nrows(),
            atoms,
            dropped,
        })
    }

    /// `mu o A^{-1}(B)` without materializing the image measure.
    pub fn eval_pushforward(&self, a: &DMatrix<f64>, b: &TailSet) -> Result<f64> {
        if a.nrows() == 1 && a.ncols() == 1 {
            let c = a[(0, 0)];
            let radial = b.radius.powf(-self.alpha);
            let scale = c.abs().powf(self.alpha);
            let mut total = 0.0;
            if c != 0.0 {
                for atom in &self.atoms {
                    let s = [atom.direction[0] * c.signum()];
                    if b.contains_direction(&s)? {
                        total += atom.mass * scale * radial;
                    }
                }
            }
            return Ok(total);
        }
        self.pushforward(a)?.eval(b)
    }

    /// The image under `x -> -x`.
    pub fn reflect(&self) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| MeasureAtom {
                direction: a.direction.iter().map(|v| -v).collect(),
                mass: a.mass,
            })
            .collect();
        Self {
            alpha: self.alpha,
            dim: self.dim,
            atoms,
            dropped: self.dropped,
        }
    }

    /// Merges atoms with equal directions (to 1e-12) and drops zero masses.
    pub fn compact(&self) -> Self {
        let mut atoms: Vec<MeasureAtom> = Vec::new();
        for a in self.atoms.iter().filter(|a| a.mass > 0.0) {
            let same = |b: &&mut MeasureAtom| {
                b.direction
                    .iter()
                    .zip(&a.direction)
                    .all(|(x, y)| (x - y).abs() <= 1e-12)
            };
            match atoms.iter_mut().find(|b| same(b)) {
                Some(b) => b.mass += a.mass,
                None => atoms.push(a.clone()),
            }
        }
        Self {
            alpha: self.alpha,
            dim: self.dim,
            atoms,
            dropped: self.dropped,
        }
    }

    /// Weighted sum of measures, as the concatenation of scaled atom lists.
    pub fn mix(measures: &[LimitMeasure], weights: &[f64]) -> Result<Self> {
        if measures.is_empty() || measures.len() != weights.len() {
            return Err(invalid(
                "mix needs one weight per measure and at least one measure",
            ));
        }
        let first = &measures[0];
        let mut atoms = Vec::new();
        let mut dropped = 0;
        for (m, &w) in measures.iter().zip(weights) {
            if (m.alpha - first.alpha).abs() > ALPHA_TOL {
                return Err(Error::IncompatibleMeasures(format!(
                    "alpha {} vs {}",
                    m.alpha, first.alpha
                )));
            }
            if m.dim != first.dim {
                return Err(Error::IncompatibleMeasures(format!(
                    "dimension {} vs {}",
                    m.dim, first.dim
                )));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(invalid(format!("mixture weight {w} must be nonnegative")));
            }
            dropped += m.dropped;
            atoms.extend(m.atoms.iter().map(|a| MeasureAtom {
                direction: a.direction.clone(),
                mass: a.mass * w,
            }));
        }
        Ok(Self {
            alpha: first.alpha,
            dim: first.dim,
            atoms,
            dropped,
        })
    }

    /// `(w, 1 - w)` of a normalized one-dimensional measure.
    pub fn one_d_weights(&self) -> Result<(f64, f64)> {
        if self.dim != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.dim,
            });
        }
        let total = self.total_mass();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::MustNormalizeFirst(total));
        }
        let w: f64 = self
            .atoms
            .iter()
            .filter(|a| a.direction[0] > 0.0)
            .map(|a| a.mass)
            .sum();
        Ok((w, 1.0 - w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn atom(direction: Vec<f64>, mass: f64) -> MeasureAtom {
        MeasureAtom { direction, mass }
    }

    fn two_sided(alpha: f64, w: f64) -> LimitMeasure {
        LimitMeasure::new(alpha, vec![atom(vec![1.0], w), atom(vec![-1.0], 1.0 - w)]).unwrap()
    }

    #[test]
    fn eval_examples() {
        let m = two_sided(1.0, 0.7);
        assert_relative_eq!(m.eval(&TailSet::ray_above(2.0).unwrap()).unwrap(), 0.35);
        assert_relative_eq!(m.eval(&TailSet::norm_exceeds(1.0).unwrap()).unwrap(), 1.0);
        let m2 = two_sided(2.0, 0.4);
        assert_relative_eq!(
            m2.eval(&TailSet::norm_exceeds(10.0).unwrap()).unwrap(),
            0.01,
            max_relative = 1e-14
        );
    }

    #[test]
    fn cap_tie_is_an_error() {
        let m = LimitMeasure::new(1.0, vec![atom(vec![1.0, 0.0], 1.0)]).unwrap();
        let b = TailSet::cone(1.0, vec![0.0, 1.0], 0.0).unwrap();
        assert!(matches!(m.eval(&b), Err(Error::CapBoundaryTie(_))));
    }

    #[test]
    fn pushforward_examples() {
        let m = LimitMeasure::new(1.0, vec![atom(vec![1.0], 1.0)]).unwrap();
        let p = m.pushforward(&DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert_eq!(p.atoms[0].direction, vec![1.0]);
        assert_relative_eq!(p.eval(&TailSet::ray_above(1.0).unwrap()).unwrap(), 2.0);

        let id = two_sided(1.3, 0.2);
        assert_eq!(id.pushforward(&DMatrix::identity(1, 1)).unwrap(), id);

        let alpha = 1.7;
        let m = LimitMeasure::new(
            alpha,
            vec![atom(vec![1.0, 0.0], 0.5), atom(vec![0.0, 1.0], 0.5)],
        )
        .unwrap();
        let p = m
            .pushforward(&DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0]))
            .unwrap();
        assert_eq!(p.atoms.len(), 1);
        assert_eq!(p.dropped, 1);
        assert_relative_eq!(
            p.atoms[0].mass,
            0.5 * 3f64.powf(alpha),
            max_relative = 1e-14
        );

        let null = m.pushforward(&DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(null.total_mass(), 0.0);
    }

    #[test]
    fn eval_pushforward_scalar_matches_general() {
        let m = two_sided(1.5, 0.7);
        for &c in &[2.0, -0.5, 0.0] {
            let a = DMatrix::from_element(1, 1, c);
            for b in [
                TailSet::ray_above(1.5).unwrap(),
                TailSet::ray_below(0.7).unwrap(),
                TailSet::norm_exceeds(2.0).unwrap(),
            ] {
                assert_relative_eq!(
                    m.eval_pushforward(&a, &b).unwrap(),
                    m.pushforward(&a).unwrap().eval(&b).unwrap(),
                    max_relative = 1e-14
                );
            }
        }
    }

    #[test]
    fn mix_examples() {
        let m = two_sided(1.0, 0.7);
        let b = TailSet::ray_above(3.0).unwrap();
        assert_eq!(
            LimitMeasure::mix(std::slice::from_ref(&m), &[1.0])
                .unwrap()
                .eval(&b)
                .unwrap(),
            m.eval(&b).unwrap()
        );
        let half = LimitMeasure::mix(&[m.clone(), m.clone()], &[0.5, 0.5]).unwrap();
        assert_relative_eq!(half.eval(&b).unwrap(), m.eval(&b).unwrap());

        let unit = LimitMeasure::new(1.0, vec![atom(vec![1.0], 1.0)]).unwrap();
        let plus = unit.pushforward(&DMatrix::from_element(1, 1, 1.0)).unwrap();
        let minus = unit
            .pushforward(&DMatrix::from_element(1, 1, -1.0))
            .unwrap();
        let both = LimitMeasure::mix(&[plus, minus], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(both.eval(&TailSet::ray_above(1.0).unwrap()).unwrap(), 1.0);
        assert_relative_eq!(both.eval(&TailSet::ray_below(1.0).unwrap()).unwrap(), 1.0);

        assert!(matches!(
            LimitMeasure::mix(&[m, two_sided(2.0, 0.5)], &[1.0, 1.0]),
            Err(Error::IncompatibleMeasures(_))
        ));
    }

    #[test]
    fn one_d_weights_examples() {
        assert_eq!(
            two_sided(1.0, 0.7).one_d_weights().unwrap(),
            (0.7, 1.0 - 0.7)
        );
        let pos = LimitMeasure::new(1.0, vec![atom(vec![1.0], 1.0)]).unwrap();
        assert_eq!(pos.one_d_weights().unwrap(), (1.0, 0.0));
        assert_eq!(two_sided(2.0, 0.5).one_d_weights().unwrap(), (0.5, 0.5));
        let doubled = pos.pushforward(&DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert!(matches!(
            doubled.one_d_weights(),
            Err(Error::MustNormalizeFirst(_))
        ));
    }

    #[test]
    fn membership() {
        let b = TailSet::cone(2.0, vec![1.0, 1.0], 0.9).unwrap();
        assert!(b.contains(&[3.0, 3.0]));
        assert!(!b.contains(&[1.0, 1.0]));
        assert!(!b.contains(&[3.0, -3.0]));
        let r = TailSet::ray_below(1.0).unwrap();
        assert!(r.contains_scalar(-1.5));
        assert!(!r.contains_scalar(1.5));
        assert!(r.contains(&[-1.5]));
    }
}
