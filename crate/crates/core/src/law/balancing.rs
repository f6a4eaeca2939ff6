use crate::error::{Error, Result};
use crate::law::RegVarLaw;

/// Level pairing `x -> h(x)` with `E[Z; Z > x] = E[|Z|; Z < -h(x)]`, defined
/// for `x >= K` on two-sided one-dimensional laws with `alpha > 1`.
#[derive(Debug, Clone)]
pub struct BalancingFunction {
    law: RegVarLaw,
    lower_bound: f64,
    bound_constant: f64,
}

/// `K` is searched on the grid `10^(k/16)`, `k = 0, 1, ...`.
const K_GRID_STEPS_PER_DECADE: f64 = 16.0;
/// `C` is the sup of `max(h/x, x/h)` over `K * 10^(i/8)`, `i = 0..=64`.
const C_GRID: usize = 64;
const BISECTION_REL_WIDTH: f64 = 1e-10;

impl BalancingFunction {
    pub fn new(law: &RegVarLaw) -> Result<Self> {
        if law.dim() != 1 {
            return Err(Error::BalancingUndefined(
                "law must be one-dimensional".into(),
            ));
        }
        if law.alpha() <= 1.0 {
            return Err(Error::BalancingUndefined(format!(
                "alpha = {} must exceed 1",
                law.alpha()
            )));
        }
        let w = law.positive_weight();
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::BalancingUndefined(format!(
                "spectral weight on each half-line must be positive (w = {w})"
            )));
        }
        let negative_mass = law.lower_partial_abs_mean(0.0);
        let mut k = 0u32;
        let lower_bound = loop {
            let x = 10f64.powf(k as f64 / K_GRID_STEPS_PER_DECADE);
            if law.upper_partial_mean(x) <= negative_mass / 2.0 {
                break x;
            }
            k += 1;
            if k > 20 * K_GRID_STEPS_PER_DECADE as u32 {
                return Err(Error::BalancingUndefined(
                    "no domain bound K found below 1e20".into(),
                ));
            }
        };
        let mut f = Self {
            law: law.clone(),
            lower_bound,
            bound_constant: 1.0,
        };
        let mut c: f64 = 1.0;
        for i in 0..=C_GRID {
            let x = lower_bound * 10f64.powf(i as f64 / 8.0);
            let g = f.eval(x)? / x;
            c = c.max(g).max(1.0 / g);
        }
        f.bound_constant = c;
        Ok(f)
    }

    /// The domain bound `K`.
    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    /// The reported constant `C` with `1/C <= h(x)/x <= C`.
    pub fn bound_constant(&self) -> f64 {
        self.bound_constant
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x >= self.lower_bound) {
            return Err(Error::OutOfDomain {
                value: x,
                lower: self.lower_bound,
            });
        }
        let law = &self.law;
        let uncentered = law.shift()[0] == 0.0;
        let w = law.positive_weight();
        if uncentered && w == 0.5 {
            return Ok(x);
        }
        let target = law.upper_partial_mean(x);
        if uncentered {
            // on [scale, inf): E[|Z|; Z < -t] = c * t^(1 - alpha)
            let (a, s) = (law.alpha(), law.scale());
            let c = (1.0 - w) * (1.0 - law.body_mass()) * a / (a - 1.0) * s.powf(a);
            let t = (target / c).powf(1.0 / (1.0 - a));
            if t >= s {
                return Ok(t);
            }
        }
        let mut lo = 0.0;
        let mut hi = x.max(law.scale());
        while law.lower_partial_abs_mean(hi) > target {
            lo = hi;
            hi *= 2.0;
        }
        while hi - lo > BISECTION_REL_WIDTH * hi {
            let mid = 0.5 * (lo + hi);
            if law.lower_partial_abs_mean(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Relative residual of the balance identity at `x`.
    pub fn residual(&self, x: f64) -> Result<f64> {
        let h = self.eval(x)?;
        let g = self.law.upper_partial_mean(x);
        Ok((self.law.lower_partial_abs_mean(h) - g).abs() / g)
    }
}

/// `h(x)` for a single `x`; see [`BalancingFunction`].
pub fn balancing_h(law: &RegVarLaw, x: f64) -> Result<f64> {
    BalancingFunction::new(law)?.eval(x)
}
