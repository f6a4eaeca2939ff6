use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::{run_batches, Exec};
use crate::law::RegVarLaw;
use crate::measure::TailSet;
use crate::models::{SeriesModel, Truncation};
use crate::rng::StreamKey;
use crate::theory::LimitConstant;

/// Default tail levels `P(|Z| > u)` for the u-grid.
pub const DEFAULT_LEVELS: [f64; 3] = [1e-2, 1e-3, 1e-4];
/// Expected exceedances required at the deepest level, and observed
/// exceedances required for a level to be judged.
pub const MIN_EXCEEDANCES: f64 = 100.0;

/// Levels `u` given directly or through noise tail probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UGrid {
    Explicit(Vec<f64>),
    Levels(Vec<f64>),
}

impl Default for UGrid {
    fn default() -> Self {
        UGrid::Levels(DEFAULT_LEVELS.to_vec())
    }
}

/// The increasing u-grid for `noise`.
pub fn resolve_u_grid(noise: &RegVarLaw, grid: &UGrid) -> Result<Vec<f64>> {
    let mut u = match grid {
        UGrid::Explicit(u) => u.clone(),
        UGrid::Levels(levels) => levels
            .iter()
            .map(|&l| noise.tail_quantile(l))
            .collect::<Result<_>>()?,
    };
    u.sort_by(f64::total_cmp);
    if u.is_empty() || u.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid("u-grid must have distinct levels"));
    }
    Ok(u)
}

/// Empirical `P(X in uB) / P(|Z| > u)` on a grid, with exact denominators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRatioEstimate {
    pub u: Vec<f64>,
    pub exceedances: Vec<u64>,
    pub denominators: Vec<f64>,
    pub ratio: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_sims: u64,
    pub set: TailSet,
    pub alpha: f64,
    pub seed: u64,
    pub stream_id: u64,
    /// Terms per draw of an infinite series (`None` for finite sequences).
    pub horizon: Option<usize>,
    pub remainder_bound: f64,
    pub mean_terms: f64,
}

/// One simulation pass; every draw is tested against all levels.
pub fn estimate_tail_ratio(
    model: &SeriesModel,
    b: &TailSet,
    u_grid: &[f64],
    n_sims: u64,
    key: StreamKey,
    exec: Exec,
) -> Result<TailRatioEstimate> {
    if u_grid.is_empty() || u_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("u-grid must be nonempty and strictly increasing"));
    }
    let (d, _) = model.dims();
    if let Some(bd) = b.dim() {
        if bd != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bd,
            });
        }
    }
    let noise = model.noise();
    let denominators: Vec<f64> = u_grid
        .iter()
        .map(|&u| noise.tail_prob(u))
        .collect::<Result<_>>()?;
    let deepest = *denominators.last().unwrap();
    let expected = n_sims as f64 * deepest;
    if expected < MIN_EXCEEDANCES {
        return Err(Error::GridTooDeep {
            u: *u_grid.last().unwrap(),
            expected,
            required_sims: (MIN_EXCEEDANCES / deepest).ceil() as u64,
        });
    }
    // fail early on gate and truncation problems
    let truncation: Truncation = model.sampler(key)?.truncation();
    let sets: Vec<TailSet> = u_grid.iter().map(|&u| b.scaled(u)).collect();
    let parts = run_batches(exec, n_sims, key, |batch| {
        let mut sampler = model.sampler(batch.key).expect("checked above");
        let mut counts = vec![0u64; sets.len()];
        let mut terms = 0u64;
        let mut x = vec![0.0; d];
        for _ in 0..batch.len {
            if d == 1 {
                x[0] = sampler.next_scalar();
                terms += sampler.last_coefficients().len as u64;
                for (c, s) in counts.iter_mut().zip(&sets) {
                    *c += u64::from(s.contains_scalar(x[0]));
                }
            } else {
                terms += sampler.next_into(&mut x) as u64;
                for (c, s) in counts.iter_mut().zip(&sets) {
                    *c += u64::from(s.contains(&x));
                }
            }
        }
        (counts, terms)
    });
    let mut exceedances = vec![0u64; u_grid.len()];
    let mut terms = 0u64;
    for (counts, t) in &parts {
        for (e, c) in exceedances.iter_mut().zip(counts) {
            *e += c;
        }
        terms += t;
    }
    let n = n_sims as f64;
    let (ratio, stderr) = exceedances
        .iter()
        .zip(&denominators)
        .map(|(&e, &den)| {
            let p = e as f64 / n;
            (p / den, (p * (1.0 - p) / n).sqrt() / den)
        })
        .unzip();
    Ok(TailRatioEstimate {
        u: u_grid.to_vec(),
        exceedances,
        denominators,
        ratio,
        stderr,
        n_sims,
        set: b.clone(),
        alpha: noise.alpha(),
        seed: key.seed,
        stream_id: key.id,
        horizon: (truncation.horizon != usize::MAX).then_some(truncation.horizon),
        remainder_bound: truncation.remainder_bound,
        mean_terms: terms as f64 / n,
    })
}

fn z_score(ratio: f64, stderr: f64, theory: f64) -> f64 {
    if stderr > 0.0 {
        (ratio - theory) / stderr
    } else if ratio == theory {
        0.0
    } else {
        f64::INFINITY.copysign(ratio - theory)
    }
}

/// Writes the columns `u, exceedances, n_sims, ratio, stderr, theory, z`;
/// `theory` and `z` are empty without a constant.
pub fn write_csv<W: Write>(est: &TailRatioEstimate, theory: Option<f64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| invalid(format!("csv output: {e}"));
    w.write_record([
        "u",
        "exceedances",
        "n_sims",
        "ratio",
        "stderr",
        "theory",
        "z",
    ])
    .map_err(io)?;
    for i in 0..est.u.len() {
        let (t, z) = match theory {
            Some(c) => (
                c.to_string(),
                z_score(est.ratio[i], est.stderr[i], c).to_string(),
            ),
            None => (String::new(), String::new()),
        };
        w.write_record([
            est.u[i].to_string(),
            est.exceedances[i].to_string(),
            est.n_sims.to_string(),
            est.ratio[i].to_string(),
            est.stderr[i].to_string(),
            t,
            z,
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| invalid(format!("csv output: {e}")))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareRule {
    pub rel_tol: f64,
    pub sigmas: f64,
    pub min_exceedances: u64,
}

impl Default for CompareRule {
    fn default() -> Self {
        Self {
            rel_tol: 0.10,
            sigmas: 3.0,
            min_exceedances: MIN_EXCEEDANCES as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub theory: f64,
    pub theory_stderr: f64,
    pub u: f64,
    pub ratio: f64,
    pub stderr: f64,
    pub allowance: f64,
    /// `(ratio - theory) / stderr` at every level.
    pub z: Vec<f64>,
    pub pass: bool,
    pub rule: CompareRule,
    pub seed: u64,
    pub n_sims: u64,
}

/// Pass iff at the deepest level with enough exceedances,
/// `|ratio - c| <= max(sigmas * stderr, rel_tol * c)`. A Monte Carlo
/// constant adds its own stderr in quadrature.
pub fn compare_to_theory(
    est: &TailRatioEstimate,
    constant: &LimitConstant,
    rule: CompareRule,
) -> Result<VerdictReport> {
    if let Some(set) = &constant.set {
        if set.region != est.set.region
            || (set.radius - est.set.radius).abs() > 1e-12 * est.set.radius
        {
            return Err(Error::Incomparable(
                "constant and estimate refer to different tail sets".into(),
            ));
        }
    }
    if let Some(m) = &constant.measure {
        if (m.alpha - est.alpha).abs() > 1e-12 {
            return Err(Error::Incomparable(format!(
                "alpha {} vs {}",
                m.alpha, est.alpha
            )));
        }
    }
    let Some(i) = (0..est.u.len())
        .rev()
        .find(|&i| est.exceedances[i] >= rule.min_exceedances)
    else {
        return Err(Error::GridTooDeep {
            u: est.u[0],
            expected: est.exceedances[0] as f64,
            required_sims: est.n_sims * rule.min_exceedances / est.exceedances[0].max(1),
        });
    };
    let c = constant.value;
    let c_se = constant.provenance.stderr();
    let se = est.stderr[i].hypot(c_se);
    let allowance = (rule.sigmas * se).max(rule.rel_tol * c.abs());
    let z = (0..est.u.len())
        .map(|k| z_score(est.ratio[k], est.stderr[k].hypot(c_se), c))
        .collect();
    Ok(VerdictReport {
        theory: c,
        theory_stderr: c_se,
        u: est.u[i],
        ratio: est.ratio[i],
        stderr: est.stderr[i],
        allowance,
        z,
        pass: (est.ratio[i] - c).abs() <= allowance,
        rule,
        seed: est.seed,
        n_sims: est.n_sims,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::{LawFamily, SpectralAtom};
    use crate::models::{linear_process, DeterministicSequence};
    use crate::theory::Provenance;

    fn fake(ratio: f64, stderr: f64) -> TailRatioEstimate {
        TailRatioEstimate {
            u: vec![10.0],
            exceedances: vec![1000],
            denominators: vec![1e-3],
            ratio: vec![ratio],
            stderr: vec![stderr],
            n_sims: 1_000_000,
            set: TailSet::norm_exceeds(1.0).unwrap(),
            alpha: 1.5,
            seed: 0,
            stream_id: 0,
            horizon: None,
            remainder_bound: 0.0,
            mean_terms: 1.0,
        }
    }

    #[test]
    fn rule_examples() {
        let rule = CompareRule::default();
        assert!(
            compare_to_theory(&fake(1.0, 0.02), &LimitConstant::exact(1.0), rule)
                .unwrap()
                .pass
        );
        assert!(
            compare_to_theory(&fake(2.05, 0.04), &LimitConstant::exact(2.0), rule)
                .unwrap()
                .pass
        );
        assert!(
            !compare_to_theory(&fake(3.0, 0.05), &LimitConstant::exact(2.0), rule)
                .unwrap()
                .pass
        );
    }

    #[test]
    fn mismatched_set_is_incomparable() {
        let mut c = LimitConstant::exact(1.0);
        c.set = Some(TailSet::ray_above(1.0).unwrap());
        assert!(matches!(
            compare_to_theory(&fake(1.0, 0.02), &c, CompareRule::default()),
            Err(Error::Incomparable(_))
        ));
        c.set = Some(TailSet::norm_exceeds(1.0).unwrap());
        c.provenance = Provenance::ClosedForm;
        assert!(compare_to_theory(&fake(1.0, 0.02), &c, CompareRule::default()).is_ok());
    }

    fn noise_only() -> SeriesModel {
        let z = RegVarLaw::new(
            1.5,
            vec![
                SpectralAtom::new(vec![1.0], 0.5),
                SpectralAtom::new(vec![-1.0], 0.5),
            ],
            LawFamily::SymmetrizedPareto1d,
            1.0,
        )
        .unwrap();
        linear_process(DeterministicSequence::scalars(&[1.0]), z)
            .unwrap()
            .with_override()
    }

    #[test]
    fn noise_only_ratio_is_one() {
        let model = noise_only();
        let u = resolve_u_grid(model.noise(), &UGrid::default()).unwrap();
        let est = estimate_tail_ratio(
            &model,
            &TailSet::norm_exceeds(1.0).unwrap(),
            &u,
            2_000_000,
            StreamKey::new(3),
            Exec::Parallel,
        )
        .unwrap();
        for i in 0..3 {
            assert!(
                (est.ratio[i] - 1.0).abs() < 3.5 * est.stderr[i],
                "{:?}",
                est
            );
        }
        assert_eq!(est.horizon, None);
        assert_eq!(est.mean_terms, 1.0);
    }

    #[test]
    fn grid_too_deep_and_csv() {
        let model = noise_only();
        let u = resolve_u_grid(model.noise(), &UGrid::Levels(vec![1e-4])).unwrap();
        let b = TailSet::norm_exceeds(1.0).unwrap();
        assert!(matches!(
            estimate_tail_ratio(&model, &b, &u, 10_000, StreamKey::new(1), Exec::Sequential),
            Err(Error::GridTooDeep { .. })
        ));
        let est = estimate_tail_ratio(&model, &b, &u, 1_000_000, StreamKey::new(1), Exec::Parallel)
            .unwrap();
        let mut buf = Vec::new();
        write_csv(&est, Some(1.0), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("u,exceedances,n_sims,ratio,stderr,theory,z\n"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn stderr_scales_with_sample_size() {
        let model = noise_only();
        let u = resolve_u_grid(model.noise(), &UGrid::Levels(vec![1e-2])).unwrap();
        let b = TailSet::norm_exceeds(1.0).unwrap();
        let se = |n: u64| {
            estimate_tail_ratio(&model, &b, &u, n, StreamKey::new(7), Exec::Parallel)
                .unwrap()
                .stderr[0]
        };
        let (s1, s2, s3) = (se(100_000), se(400_000), se(1_600_000));
        assert!((s1 / s2 / 2.0 - 1.0).abs() < 0.2);
        assert!((s2 / s3 / 2.0 - 1.0).abs() < 0.2);
    }
}
