use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exec::Exec;
use crate::law::RegVarLaw;
use crate::models::{CoefficientDraw, CoefficientProcess};
use crate::rng::StreamKey;
use crate::stats::mc_mean;

/// Ratios `P(||S_A|| > u) / P(|Z| > u)` on a grid of levels. A finite grid
/// cannot certify a limit, so the verdict is a heuristic screen only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub u: Vec<f64>,
    pub ratio: Vec<f64>,
    pub stderr: Vec<f64>,
    pub consistent_with_zero_limit: bool,
    pub heuristic: bool,
    pub note: String,
}

/// Ratio at the last level must be below this (plus three stderr) and the
/// sequence must not increase beyond three combined stderr.
const PROBE_THRESHOLD: f64 = 0.05;

/// Screens the nonzero-mean condition: the tail of `S_A = sum_j A_j` (or of
/// `N` for random sums) against the noise tail.
pub fn nonzero_mean_probe(
    coeffs: &CoefficientProcess,
    noise: &RegVarLaw,
    u_grid: &[f64],
    n_draws: u64,
    key: StreamKey,
    horizon: usize,
    exec: Exec,
) -> Result<ProbeReport> {
    if u_grid.is_empty() || u_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("probe grid must be nonempty and increasing"));
    }
    let denominators: Vec<f64> = u_grid
        .iter()
        .map(|&u| noise.tail_prob(u))
        .collect::<Result<_>>()?;
    let (ratio, stderr): (Vec<f64>, Vec<f64>) = match coeffs {
        CoefficientProcess::RandomSum { count, .. } => u_grid
            .iter()
            .zip(&denominators)
            .map(|(&u, d)| (count.survival(u) / d, 0.0))
            .unzip(),
        _ if coeffs.is_deterministic() => {
            let mut draw = CoefficientDraw::default();
            coeffs.sample_into(&mut key.rng(), horizon, &mut draw);
            let s = sum_norm(&draw);
            u_grid
                .iter()
                .zip(&denominators)
                .map(|(&u, d)| (f64::from(u8::from(s > u)) / d, 0.0))
                .unzip()
        }
        _ => {
            let s_key = key;
            u_grid
                .iter()
                .zip(&denominators)
                .map(|(&u, d)| {
                    // common random numbers: every level reuses the same draws
                    let est = mc_mean(exec, n_draws, s_key, |rng| {
                        let mut draw = CoefficientDraw::default();
                        coeffs.sample_into(rng, horizon, &mut draw);
                        f64::from(u8::from(sum_norm(&draw) > u))
                    });
                    (est.mean / d, est.stderr / d)
                })
                .unzip()
        }
    };
    let last = ratio.len() - 1;
    let below = ratio[last] + 3.0 * stderr[last] < PROBE_THRESHOLD;
    let monotone = ratio
        .windows(2)
        .zip(stderr.windows(2))
        .all(|(r, s)| r[1] <= r[0] + 3.0 * (s[0] + s[1]));
    Ok(ProbeReport {
        u: u_grid.to_vec(),
        ratio,
        stderr,
        consistent_with_zero_limit: below && monotone,
        heuristic: true,
        note: "finite-grid screen; cannot certify the limit".into(),
    })
}

/// `||sum_j A_j||`.
fn sum_norm(draw: &CoefficientDraw) -> f64 {
    if draw.identity_run {
        return draw.len as f64;
    }
    if draw.len == 0 {
        return 0.0;
    }
    let mut total = draw.matrix(0);
    for k in 1..draw.len {
        total += draw.matrix(k);
    }
    crate::models::op_norm(&total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::{LawFamily, SpectralAtom};
    use crate::models::{CountLaw, DeterministicSequence, MatrixLaw};

    fn noise() -> RegVarLaw {
        RegVarLaw::new(
            1.5,
            vec![SpectralAtom::new(vec![1.0], 1.0)],
            LawFamily::ParetoPolar,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_sum_vanishes_beyond_its_norm() {
        let coeffs =
            CoefficientProcess::Deterministic(DeterministicSequence::scalars(&[1.0, 0.5, 0.25]));
        let r = nonzero_mean_probe(
            &coeffs,
            &noise(),
            &[1.0, 2.0, 5.0, 10.0],
            0,
            StreamKey::new(0),
            10,
            Exec::Sequential,
        )
        .unwrap();
        assert!(r.ratio[0] > 0.0);
        assert_eq!(&r.ratio[2..], &[0.0, 0.0]);
        assert!(r.consistent_with_zero_limit && r.heuristic);
    }

    #[test]
    fn geometric_count_passes_heavy_count_fails() {
        let grid: Vec<f64> = (1..=6).map(|k| 10f64.powi(k)).collect();
        let geo = CoefficientProcess::RandomSum {
            count: CountLaw::Geometric { mean: 4.0 },
            dim: 1,
        };
        let r = nonzero_mean_probe(
            &geo,
            &noise(),
            &grid,
            0,
            StreamKey::new(0),
            0,
            Exec::Sequential,
        )
        .unwrap();
        assert!(r.consistent_with_zero_limit);
        let heavy = CoefficientProcess::RandomSum {
            count: CountLaw::ParetoFloor { tail_index: 0.75 },
            dim: 1,
        };
        let r = nonzero_mean_probe(
            &heavy,
            &noise(),
            &grid,
            0,
            StreamKey::new(0),
            0,
            Exec::Sequential,
        )
        .unwrap();
        assert!(!r.consistent_with_zero_limit);
        assert!(r.ratio.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn random_coefficients_use_simulation() {
        let coeffs = CoefficientProcess::SreProduct {
            law: MatrixLaw::UniformScalar {
                low: 0.0,
                high: 0.9,
                dim: 1,
            },
        };
        let r = nonzero_mean_probe(
            &coeffs,
            &noise(),
            &[2.0, 5.0, 20.0],
            20_000,
            StreamKey::new(3),
            200,
            Exec::Parallel,
        )
        .unwrap();
        assert!(r.stderr[0] > 0.0);
        assert!(r.consistent_with_zero_limit);
    }
}
