use crate::error::{invalid, Error, Result};

/// `alpha_hat = k / sum_{i <= k} log(X_(i) / X_(k+1))` over the upper order
/// statistics of `|samples|`.
pub fn hill_estimate(samples: &[f64], k: usize) -> Result<f64> {
    let n = samples.len();
    if k < 10 || k >= n {
        return Err(invalid(format!(
            "Hill estimator needs 10 <= k < n (k = {k}, n = {n})"
        )));
    }
    let mut abs: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    // the k + 1 largest, in descending order
    abs.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
    let threshold = abs[k];
    if !(threshold > 0.0) {
        return Err(Error::DegenerateSample(format!(
            "threshold order statistic is {threshold}"
        )));
    }
    let denom: f64 = abs[..k].iter().map(|x| (x / threshold).ln()).sum();
    if !(denom > 0.0) {
        return Err(Error::DegenerateSample(
            "upper order statistics are tied with the threshold".into(),
        ));
    }
    Ok(k as f64 / denom)
}

/// `ceil(n^(2/3))` capped at `n / 10`.
pub fn default_hill_k(n: usize) -> usize {
    ((n as f64).powf(2.0 / 3.0).ceil() as usize).min(n / 10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::{LawFamily, RegVarLaw, SpectralAtom};
    use crate::rng::StreamKey;

    #[test]
    fn pareto_sample() {
        let law = RegVarLaw::new(
            1.5,
            vec![SpectralAtom::new(vec![1.0], 1.0)],
            LawFamily::ParetoPolar,
            1.0,
        )
        .unwrap();
        let xs: Vec<f64> = law
            .sample(StreamKey::new(5), 100_000)
            .iter()
            .map(|v| v[0])
            .collect();
        let a = hill_estimate(&xs, 1000).unwrap();
        assert!((a - 1.5).abs() < 0.15, "{a}");
    }

    #[test]
    fn inverse_cdf_grid_converges() {
        let alpha = 1.5;
        let err = |n: usize| {
            let xs: Vec<f64> = (1..=n)
                .map(|i| (i as f64 / n as f64).powf(-1.0 / alpha))
                .collect();
            (hill_estimate(&xs, default_hill_k(n)).unwrap() - alpha).abs()
        };
        let (e3, e5) = (err(1_000), err(100_000));
        assert!(e5 < e3 && e5 < 0.01, "{e3} {e5}");
    }

    #[test]
    fn degenerate_and_bad_k() {
        assert!(matches!(
            hill_estimate(&[2.0; 100], 20),
            Err(Error::DegenerateSample(_))
        ));
        assert!(hill_estimate(&[1.0, 2.0, 3.0], 5).is_err());
        assert!(hill_estimate(&vec![1.0; 100], 9).is_err());
        assert_eq!(default_hill_k(1_000_000), 10_000);
        assert_eq!(default_hill_k(100), 10);
    }
}
