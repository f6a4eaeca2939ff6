use std::path::PathBuf;

use nalgebra::DMatrix;
use rvseries::estimation::{CompareRule, UGrid, DEFAULT_LEVELS};
use rvseries::models::{
    CoefficientProcess, CountLaw, DeterministicSequence, Interarrival, MatrixLaw, RewardPath,
    SeriesModel, TruncationPolicy,
};
use rvseries::{Error, LawSpec, Result, TailSet};
use serde::{Deserialize, Serialize};

/// One experiment: noise law, coefficient model, tail set and run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub noise: LawSpec,
    pub model: ModelConfig,
    #[serde(default)]
    pub tail_set: TailSetConfig,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub estimation: EstimationConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory: Option<TheoryOverride>,
    #[serde(default)]
    pub output: OutputConfig,
    /// Results written by a previous run; ignored on input.
    #[serde(default, skip_serializing)]
    pub report: Option<toml::Table>,
}

/// A matrix as a scalar (`1 x 1`) or as rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixConfig {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl MatrixConfig {
    pub fn build(&self) -> Result<DMatrix<f64>> {
        match self {
            MatrixConfig::Scalar(v) => Ok(DMatrix::from_element(1, 1, *v)),
            MatrixConfig::Rows(rows) => {
                let cols = rows.first().map_or(0, Vec::len);
                if cols == 0 || rows.iter().any(|r| r.len() != cols) {
                    return Err(Error::InvalidParameter(
                        "matrix rows must be nonempty and of equal length".into(),
                    ));
                }
                Ok(DMatrix::from_row_iterator(
                    rows.len(),
                    cols,
                    rows.iter().flatten().copied(),
                ))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum MatrixLawConfig {
    Constant {
        value: MatrixConfig,
    },
    UniformScalar {
        low: f64,
        high: f64,
        #[serde(default = "one_dim")]
        dim: usize,
    },
    Discrete {
        matrices: Vec<MatrixConfig>,
        probs: Vec<f64>,
    },
}

fn one_dim() -> usize {
    1
}

impl MatrixLawConfig {
    fn build(&self) -> Result<MatrixLaw> {
        Ok(match self {
            MatrixLawConfig::Constant { value } => MatrixLaw::Constant(value.build()?),
            MatrixLawConfig::UniformScalar { low, high, dim } => MatrixLaw::UniformScalar {
                low: *low,
                high: *high,
                dim: *dim,
            },
            MatrixLawConfig::Discrete { matrices, probs } => MatrixLaw::Discrete {
                matrices: matrices
                    .iter()
                    .map(MatrixConfig::build)
                    .collect::<Result<_>>()?,
                probs: probs.clone(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum CountConfig {
    Constant { n: u64 },
    Geometric { mean: f64 },
    ParetoFloor { tail_index: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum PathConfig {
    Constant { value: MatrixConfig },
    ExpDecay { base: MatrixConfig, rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum InterarrivalConfig {
    Deterministic { gap: f64 },
    Exponential { rate: f64 },
    Uniform { low: f64, high: f64 },
}

/// Coefficient model, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    /// `X = Z`.
    NoiseOnly,
    /// Finitely many deterministic coefficients.
    Linear { coefficients: Vec<MatrixConfig> },
    /// `A_j = ratio^j * first`.
    Geometric {
        ratio: f64,
        first: Option<MatrixConfig>,
    },
    /// `A_j = (j + 1)^(-exponent) * first`.
    PowerLaw {
        exponent: f64,
        first: Option<MatrixConfig>,
    },
    /// Products `A_j = M_1 ... M_j` of an i.i.d. recursion.
    Sre { law: MatrixLawConfig },
    /// `X = Z_1 + ... + Z_N`.
    RandomSum { count: CountConfig },
    /// `A_j = weights[j] * M_j` with i.i.d. `M_j`.
    Iid {
        weights: Vec<f64>,
        law: MatrixLawConfig,
    },
    /// Rewards `H(tau_j)` at renewal epochs up to `horizon`.
    RenewalReward {
        path: PathConfig,
        interarrival: InterarrivalConfig,
        horizon: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailKind {
    #[default]
    Norm,
    RayAbove,
    RayBelow,
    Cone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSetConfig {
    #[serde(default)]
    pub kind: TailKind,
    #[serde(default = "one")]
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_cos: Option<f64>,
}

impl Default for TailSetConfig {
    fn default() -> Self {
        Self {
            kind: TailKind::Norm,
            radius: 1.0,
            center: None,
            min_cos: None,
        }
    }
}

fn one() -> f64 {
    1.0
}

impl TailSetConfig {
    pub fn build(&self) -> Result<TailSet> {
        match self.kind {
            TailKind::Norm => TailSet::norm_exceeds(self.radius),
            TailKind::RayAbove => TailSet::ray_above(self.radius),
            TailKind::RayBelow => TailSet::ray_below(self.radius),
            TailKind::Cone => match (&self.center, self.min_cos) {
                (Some(c), Some(m)) => TailSet::cone(self.radius, c.clone(), m),
                _ => Err(Error::InvalidParameter(
                    "a cone tail set needs center and min_cos".into(),
                )),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_cap")]
    pub cap: f64,
    /// Draws for conditions without a closed form or usable bound.
    #[serde(default = "default_mc_draws")]
    pub mc_draws: u64,
    /// Terms drawn for infinite sequences in those estimates.
    #[serde(default = "default_mc_horizon")]
    pub mc_horizon: usize,
    #[serde(default)]
    pub nonzero_mean_declared: bool,
    /// Sample even if the conditions fail.
    #[serde(default, rename = "override")]
    pub override_gate: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            epsilon: None,
            cap: default_cap(),
            mc_draws: default_mc_draws(),
            mc_horizon: default_mc_horizon(),
            nonzero_mean_declared: false,
            override_gate: false,
        }
    }
}

fn default_cap() -> f64 {
    rvseries::theory::DEFAULT_CAP
}

fn default_mc_draws() -> u64 {
    20_000
}

fn default_mc_horizon() -> usize {
    1_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    /// Tail probabilities of `|Z|` defining the u-grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
    /// Explicit u-grid; takes precedence over `levels`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_grid: Option<Vec<f64>>,
    #[serde(default = "default_n_sims")]
    pub n_sims: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_sigmas")]
    pub sigmas: f64,
    /// Draws for a Monte Carlo limit constant.
    #[serde(default = "default_theory_draws")]
    pub theory_draws: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_budget: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_n: Option<usize>,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            levels: None,
            u_grid: None,
            n_sims: default_n_sims(),
            seed: default_seed(),
            rel_tol: default_rel_tol(),
            sigmas: default_sigmas(),
            theory_draws: default_theory_draws(),
            tail_budget: None,
            fixed_n: None,
        }
    }
}

fn default_n_sims() -> u64 {
    1_000_000
}

fn default_seed() -> u64 {
    1
}

fn default_rel_tol() -> f64 {
    0.10
}

fn default_sigmas() -> f64 {
    3.0
}

fn default_theory_draws() -> u64 {
    200_000
}

impl EstimationConfig {
    pub fn u_grid(&self) -> UGrid {
        match (&self.u_grid, &self.levels) {
            (Some(u), _) => UGrid::Explicit(u.clone()),
            (None, Some(l)) => UGrid::Levels(l.clone()),
            (None, None) => UGrid::Levels(DEFAULT_LEVELS.to_vec()),
        }
    }

    pub fn rule(&self) -> CompareRule {
        CompareRule {
            rel_tol: self.rel_tol,
            sigmas: self.sigmas,
            ..CompareRule::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    /// Tail probability of `|Z|` at which remainders are probed.
    #[serde(default = "default_probe_level")]
    pub level: f64,
    #[serde(default = "default_probe_sims")]
    pub n_sims: u64,
    /// Model draws for the Hill estimate.
    #[serde(default = "default_probe_sims")]
    pub hill_sims: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hill_k: Option<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            n_list: default_n_list(),
            level: default_probe_level(),
            n_sims: default_probe_sims(),
            hill_sims: default_probe_sims(),
            hill_k: None,
        }
    }
}

fn default_n_list() -> Vec<usize> {
    vec![0, 2, 4, 8, 16]
}

fn default_probe_level() -> f64 {
    1e-3
}

fn default_probe_sims() -> u64 {
    100_000
}

/// A user-supplied limit constant replacing the computed one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryOverride {
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses TOML; errors carry line and column.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// The model with truncation, epsilon and gate flags applied; unchecked.
    pub fn build_model(&self) -> Result<SeriesModel> {
        let noise = self.noise.build()?;
        let dim = noise.dim();
        let identity = || DMatrix::identity(dim, dim);
        let first = |m: &Option<MatrixConfig>| {
            m.as_ref()
                .map_or_else(|| Ok(identity()), MatrixConfig::build)
        };
        let coeffs = match &self.model {
            ModelConfig::NoiseOnly => {
                CoefficientProcess::Deterministic(DeterministicSequence::Finite(vec![identity()]))
            }
            ModelConfig::Linear { coefficients } => {
                CoefficientProcess::Deterministic(DeterministicSequence::Finite(
                    coefficients
                        .iter()
                        .map(MatrixConfig::build)
                        .collect::<Result<_>>()?,
                ))
            }
            ModelConfig::Geometric { ratio, first: f } => {
                CoefficientProcess::Deterministic(DeterministicSequence::Geometric {
                    first: first(f)?,
                    ratio: *ratio,
                })
            }
            ModelConfig::PowerLaw { exponent, first: f } => {
                CoefficientProcess::Deterministic(DeterministicSequence::PowerLaw {
                    first: first(f)?,
                    exponent: *exponent,
                })
            }
            ModelConfig::Sre { law } => CoefficientProcess::SreProduct { law: law.build()? },
            ModelConfig::RandomSum { count } => CoefficientProcess::RandomSum {
                count: match *count {
                    CountConfig::Constant { n } => CountLaw::Constant(n),
                    CountConfig::Geometric { mean } => CountLaw::Geometric { mean },
                    CountConfig::ParetoFloor { tail_index } => CountLaw::ParetoFloor { tail_index },
                },
                dim,
            },
            ModelConfig::Iid { weights, law } => CoefficientProcess::IidRandom {
                weights: weights.clone(),
                law: law.build()?,
            },
            ModelConfig::RenewalReward {
                path,
                interarrival,
                horizon,
            } => CoefficientProcess::RenewalReward {
                path: match path {
                    PathConfig::Constant { value } => RewardPath::Constant(value.build()?),
                    PathConfig::ExpDecay { base, rate } => RewardPath::ExpDecay {
                        base: base.build()?,
                        rate: *rate,
                    },
                },
                interarrival: match *interarrival {
                    InterarrivalConfig::Deterministic { gap } => Interarrival::Deterministic(gap),
                    InterarrivalConfig::Exponential { rate } => Interarrival::Exponential { rate },
                    InterarrivalConfig::Uniform { low, high } => {
                        Interarrival::Uniform { low, high }
                    }
                },
                horizon: *horizon,
            },
        };
        let mut model = SeriesModel::new(noise, coeffs)?;
        let est = &self.estimation;
        model = match (est.fixed_n, est.tail_budget) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidParameter(
                    "set at most one of fixed_n and tail_budget".into(),
                ))
            }
            (Some(n), None) => model.with_truncation(TruncationPolicy::FixedN(n))?,
            (None, Some(d)) => model.with_truncation(TruncationPolicy::TailBudget(d))?,
            (None, None) => model,
        };
        if let Some(eps) = self.check.epsilon {
            model = model.with_epsilon(eps)?;
        }
        if self.check.nonzero_mean_declared {
            model = model.declare_nonzero_mean();
        }
        if self.check.override_gate {
            model = model.with_override();
        }
        Ok(model)
    }
}
