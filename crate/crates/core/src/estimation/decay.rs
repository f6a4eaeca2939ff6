use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exec::{run_batches, Exec};
use crate::law::RegVarLaw;
use crate::models::{CoefficientDraw, SeriesModel};
use crate::rng::StreamKey;
use crate::stats::Accumulator;

/// Truncation levels `tau` of the small-jump variant.
pub const DEFAULT_TAUS: [f64; 3] = [0.5, 0.1, 0.01];

/// Remainder ratio `P(|sum_{j > n} A_j Z_j| > u) / P(|Z| > u)` for one `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub n: usize,
    pub crude_ratio: f64,
    pub crude_stderr: f64,
    /// Conditional Monte Carlo over the largest term; one-dimensional
    /// models only.
    pub conditional_ratio: Option<f64>,
    pub conditional_stderr: Option<f64>,
}

/// `P(|sum_j A_j Z_j 1{|Z_j| <= tau u}| > u) / P(|Z| > u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNoiseRow {
    pub tau: f64,
    pub ratio: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTable {
    pub u: f64,
    pub denominator: f64,
    pub n_sims: u64,
    /// Terms kept after index `n` for infinite sequences.
    pub horizon: Option<usize>,
    pub rows: Vec<DecayRow>,
    pub truncated_noise: Vec<TruncatedNoiseRow>,
}

impl DecayTable {
    /// Preferred ratio per row: conditional when available.
    pub fn ratios(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.conditional_ratio.unwrap_or(r.crude_ratio))
            .collect()
    }
}

/// `P(Y in (lo, hi))` for `Y = a Z` with `a != 0`.
fn scaled_interval(noise: &RegVarLaw, a: f64, lo: f64, hi: f64) -> f64 {
    if !(hi > lo) {
        return 0.0;
    }
    let (zl, zh) = if a > 0.0 {
        (lo / a, hi / a)
    } else {
        (hi / a, lo / a)
    };
    let above = |t: f64| {
        if t == f64::NEG_INFINITY {
            1.0
        } else if t == f64::INFINITY {
            0.0
        } else {
            noise.prob_above(t)
        }
    };
    (above(zl) - above(zh)).max(0.0)
}

/// Conditional estimate of `P(|sum_i Y_i| > u)` given all `Y_k`, summing over
/// which term is the largest in absolute value: for each `i`,
/// `P(|c_i + a_i Z| > u, |a_i Z| > m_i)` with `c_i` and `m_i` the sum and the
/// largest absolute value of the other terms.
fn conditional_exceedance(noise: &RegVarLaw, a: &[f64], y: &[f64], u: f64) -> f64 {
    let total: f64 = y.iter().sum();
    let (mut top, mut second, mut top_idx) = (0.0f64, 0.0f64, usize::MAX);
    for (k, v) in y.iter().enumerate() {
        let v = v.abs();
        if v > top {
            second = top;
            top = v;
            top_idx = k;
        } else if v > second {
            second = v;
        }
    }
    let mut p = 0.0;
    for (i, (&ai, &yi)) in a.iter().zip(y).enumerate() {
        if ai == 0.0 {
            continue;
        }
        let c = total - yi;
        let m = if i == top_idx { second } else { top };
        p += scaled_interval(noise, ai, (u - c).max(m), f64::INFINITY);
        p += scaled_interval(noise, ai, f64::NEG_INFINITY, (-u - c).min(-m));
        p += scaled_interval(noise, ai, u - c, -m);
        p += scaled_interval(noise, ai, m, -u - c);
    }
    p
}

struct Partial {
    crude: Vec<Accumulator>,
    conditional: Vec<Accumulator>,
    tau: Vec<Accumulator>,
}

/// Remainder tails after `n` terms for every `n` in `n_list`, sharing draws
/// across `n`, plus the small-jump variant over the whole series.
pub fn remainder_decay_probe(
    model: &SeriesModel,
    n_list: &[usize],
    u: f64,
    n_sims: u64,
    key: StreamKey,
    exec: Exec,
) -> Result<DecayTable> {
    if n_list.is_empty() {
        return Err(invalid("remainder probe needs at least one n"));
    }
    let truncation = model.sampler(key)?.truncation();
    let noise = model.noise();
    let denominator = noise.tail_prob(u)?;
    let (d, p) = model.dims();
    let scalar = d == 1 && p == 1;
    let finite = model.coeffs().is_finite_support();
    let h = truncation.horizon;
    let n_max = *n_list.iter().max().unwrap();
    let total_horizon = if finite { usize::MAX } else { h + n_max + 1 };
    let parts = run_batches(exec, n_sims, key, |batch| {
        let (mut coeff_rng, mut noise_rng) = batch.key.split_roles();
        let mut draw = CoefficientDraw::default();
        let mut z: Vec<f64> = Vec::new();
        let mut zk = vec![0.0; p];
        let mut x = vec![0.0; d];
        let (mut a_buf, mut y_buf) = (Vec::new(), Vec::new());
        let mut part = Partial {
            crude: vec![Accumulator::default(); n_list.len()],
            conditional: vec![Accumulator::default(); n_list.len()],
            tau: vec![Accumulator::default(); DEFAULT_TAUS.len()],
        };
        for _ in 0..batch.len {
            model
                .coeffs()
                .sample_into(&mut coeff_rng, total_horizon, &mut draw);
            z.clear();
            for _ in 0..draw.len {
                noise.sample_into(&mut noise_rng, &mut zk);
                z.extend_from_slice(&zk);
            }
            let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (r, &n) in n_list.iter().enumerate() {
                let keep = |k: usize| {
                    let j = draw.first + k;
                    j > n && (finite || j <= n + h)
                };
                x.iter_mut().for_each(|v| *v = 0.0);
                a_buf.clear();
                y_buf.clear();
                for k in (0..draw.len).filter(|&k| keep(k)) {
                    draw.apply_add(k, &z[k * p..(k + 1) * p], &mut x);
                    if scalar {
                        let a = draw.scalar(k);
                        a_buf.push(a);
                        y_buf.push(a * z[k]);
                    }
                }
                part.crude[r].push(f64::from(u8::from(norm(&x) > u)));
                if scalar {
                    part.conditional[r].push(conditional_exceedance(noise, &a_buf, &y_buf, u));
                }
            }
            for (t, &tau) in DEFAULT_TAUS.iter().enumerate() {
                x.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..draw.len {
                    if !finite && draw.first + k >= h {
                        break;
                    }
                    let zk = &z[k * p..(k + 1) * p];
                    if norm(zk) <= tau * u {
                        draw.apply_add(k, zk, &mut x);
                    }
                }
                part.tau[t].push(f64::from(u8::from(norm(&x) > u)));
            }
        }
        part
    });
    let reduce = |pick: &dyn Fn(&Partial) -> &Vec<Accumulator>, i: usize| {
        parts
            .iter()
            .fold(Accumulator::default(), |acc, part| {
                acc.merge(&pick(part)[i])
            })
            .estimate()
    };
    let rows = n_list
        .iter()
        .enumerate()
        .map(|(r, &n)| {
            let crude = reduce(&|p| &p.crude, r);
            let cond = scalar.then(|| reduce(&|p| &p.conditional, r));
            DecayRow {
                n,
                crude_ratio: crude.mean / denominator,
                crude_stderr: crude.stderr / denominator,
                conditional_ratio: cond.map(|c| c.mean / denominator),
                conditional_stderr: cond.map(|c| c.stderr / denominator),
            }
        })
        .collect();
    let truncated_noise = DEFAULT_TAUS
        .iter()
        .enumerate()
        .map(|(t, &tau)| {
            let e = reduce(&|p| &p.tau, t);
            TruncatedNoiseRow {
                tau,
                ratio: e.mean / denominator,
                stderr: e.stderr / denominator,
            }
        })
        .collect();
    Ok(DecayTable {
        u,
        denominator,
        n_sims,
        horizon: (!finite).then_some(h),
        rows,
        truncated_noise,
    })
}
