use rand::Rng;

use crate::rng::open_unit;

/// Radial part of the built-in laws: with probability `body` uniform on
/// (0, scale], otherwise Pareto(alpha) on [scale, inf).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Radial {
    pub alpha: f64,
    pub scale: f64,
    pub body: f64,
}

impl Radial {
    /// P(R > r).
    pub fn survival(&self, r: f64) -> f64 {
        if r <= 0.0 {
            1.0
        } else if r < self.scale {
            (1.0 - self.body) + self.body * (1.0 - r / self.scale)
        } else {
            (1.0 - self.body) * (r / self.scale).powf(-self.alpha)
        }
    }

    /// P(R < r), computed directly so small values keep full precision.
    pub fn below(&self, r: f64) -> f64 {
        if r <= 0.0 {
            0.0
        } else if r < self.scale {
            self.body * r / self.scale
        } else {
            1.0 - (1.0 - self.body) * (r / self.scale).powf(-self.alpha)
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean_above(0.0)
    }

    /// E[R; R > r]. Infinite when alpha <= 1.
    pub fn mean_above(&self, r: f64) -> f64 {
        let a = self.alpha;
        if a <= 1.0 {
            return f64::INFINITY;
        }
        let tail_from_scale = (1.0 - self.body) * a / (a - 1.0) * self.scale;
        if r <= 0.0 {
            self.body * self.scale / 2.0 + tail_from_scale
        } else if r < self.scale {
            self.body * (self.scale * self.scale - r * r) / (2.0 * self.scale) + tail_from_scale
        } else {
            (1.0 - self.body) * a / (a - 1.0) * r * (r / self.scale).powf(-a)
        }
    }

    /// E[R; R < r] (= E[R; R <= r], the law is continuous).
    pub fn mean_below(&self, r: f64) -> f64 {
        if r <= 0.0 {
            0.0
        } else if r < self.scale {
            self.body * r * r / (2.0 * self.scale)
        } else {
            self.mean() - self.mean_above(r)
        }
    }

    /// E[R^p; R <= x].
    pub fn moment_below(&self, p: f64, x: f64) -> f64 {
        let (a, s, b) = (self.alpha, self.scale, self.body);
        if x <= 0.0 {
            0.0
        } else if x < s {
            b * x.powf(p + 1.0) / ((p + 1.0) * s)
        } else {
            let body = b * s.powf(p) / (p + 1.0);
            let ratio = x / s;
            let tail = if (p - a).abs() < 1e-14 {
                (1.0 - b) * a * s.powf(p) * ratio.ln()
            } else {
                (1.0 - b) * a * s.powf(p) * (ratio.powf(p - a) - 1.0) / (p - a)
            };
            body + tail
        }
    }

    /// Density of R at r > 0.
    pub fn density(&self, r: f64) -> f64 {
        if r <= 0.0 {
            0.0
        } else if r <= self.scale {
            self.body / self.scale
        } else {
            (1.0 - self.body) * self.alpha / self.scale * (r / self.scale).powf(-self.alpha - 1.0)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.body > 0.0 && rng.random::<f64>() < self.body {
            self.scale * open_unit(rng)
        } else {
            self.scale * open_unit(rng).powf(-1.0 / self.alpha)
        }
    }
}
