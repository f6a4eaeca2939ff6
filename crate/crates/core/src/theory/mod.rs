//! Moment-condition gatekeeping and theoretical tail-limit constants.

mod conditions;
mod constants;
mod probe;
mod sre;

pub use conditions::{
    certify, check_moment_conditions, ConditionId, ConditionResult, Estimation, McBudget,
    MomentCheckParams, MomentReport, Verdict, DEFAULT_CAP,
};
pub use constants::{
    closed_form_constant, expected_limit_measure, limit_constant_mc, linear_limit_1d,
    random_sum_constant, LimitConstant, Provenance,
};
pub use probe::{nonzero_mean_probe, ProbeReport};
pub use sre::{lyapunov_estimate, sre_constant_1d, sre_contraction_check, ContractionVerdict};

/// The moment-condition regime selected by the tail index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `alpha` in `(0, 1) U (1, 2)`.
    Interior,
    /// `alpha` exactly 1 or 2.
    Boundary,
    /// `alpha > 2`.
    AboveTwo,
}

impl Regime {
    pub fn of(alpha: f64) -> Self {
        if alpha == 1.0 || alpha == 2.0 {
            Regime::Boundary
        } else if alpha > 2.0 {
            Regime::AboveTwo
        } else {
            Regime::Interior
        }
    }
}

/// `min(alpha, |alpha - 1|, |alpha - 2|, 1) / 4`, or `alpha / 8` at the
/// boundary values 1 and 2.
pub fn default_epsilon(alpha: f64) -> f64 {
    if Regime::of(alpha) == Regime::Boundary {
        alpha / 8.0
    } else {
        alpha
            .min((alpha - 1.0).abs())
            .min((alpha - 2.0).abs())
            .min(1.0)
            / 4.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_epsilon_values() {
        assert_eq!(default_epsilon(1.5), 0.125);
        assert_eq!(default_epsilon(2.0), 0.25);
        assert_eq!(default_epsilon(1.0), 0.125);
        assert_eq!(default_epsilon(0.5), 0.125);
        assert_eq!(default_epsilon(7.0), 0.25);
        assert_eq!(Regime::of(2.0), Regime::Boundary);
        assert_eq!(Regime::of(2.0000001), Regime::AboveTwo);
        assert_eq!(Regime::of(0.3), Regime::Interior);
    }
}
