use rand::Rng;

use crate::error::{Result, SmcError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    /// i.i.d. categorical draws.
    #[default]
    Multinomial,
    Systematic,
}

/// Normalized weights `w / sum(w)` from log-weights, with the max shifted to 0.
fn normalized(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(SmcError::DegenerateWeights { t: 0 });
    }
    if !max.is_finite() || log_weights.iter().any(|w| w.is_nan()) {
        return Err(SmcError::NonFiniteWeights { t: 0 });
    }
    let mut w: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// Effective sample size `(sum w)^2 / sum w^2`, computed after a max shift.
pub fn ess(log_weights: &[f64]) -> Result<f64> {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(SmcError::DegenerateWeights { t: 0 });
    }
    if !max.is_finite() || log_weights.iter().any(|w| w.is_nan()) {
        return Err(SmcError::NonFiniteWeights { t: 0 });
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    for lw in log_weights {
        let w = (lw - max).exp();
        s1 += w;
        s2 += w * w;
    }
    Ok((s1 * s1 / s2).clamp(1.0, log_weights.len() as f64))
}

/// Multinomial resampling: `count` i.i.d. ancestor indices (0-based).
pub fn resample<R: Rng + ?Sized>(log_weights: &[f64], count: usize, rng: &mut R) -> Result<Vec<usize>> {
    resample_with(Resampling::Multinomial, log_weights, count, rng)
}

pub fn resample_with<R: Rng + ?Sized>(
    scheme: Resampling,
    log_weights: &[f64],
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let w = normalized(log_weights)?;
    let mut cdf = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for v in &w {
        acc += v;
        cdf.push(acc);
    }
    let last_positive = w.iter().rposition(|&v| v > 0.0).expect("at least one positive weight");
    let pick = |u: f64| -> usize {
        let target = u * acc;
        let idx = cdf.partition_point(|&c| c <= target);
        // rounding can push past the last atom, or land on a zero-weight slot
        let mut i = idx.min(last_positive);
        while w[i] == 0.0 && i < last_positive {
            i += 1;
        }
        i
    };
    let out = match scheme {
        Resampling::Multinomial => (0..count).map(|_| pick(rng.random::<f64>())).collect(),
        Resampling::Systematic => {
            let u0: f64 = rng.random();
            (0..count).map(|k| pick((k as f64 + u0) / count as f64)).collect()
        }
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStreams;

    #[test]
    fn single_atom_always_selected() {
        let mut rng = RngStreams::from_seed(1).stream(0);
        let idx = resample(&[0.0, f64::NEG_INFINITY, f64::NEG_INFINITY], 5, &mut rng).unwrap();
        assert_eq!(idx, vec![0; 5]);
        let idx = resample(&[f64::NEG_INFINITY, f64::NEG_INFINITY, 3.0], 4, &mut rng).unwrap();
        assert_eq!(idx, vec![2; 4]);
    }

    #[test]
    fn all_zero_weights_is_degenerate() {
        let mut rng = RngStreams::from_seed(1).stream(0);
        let err = resample(&[f64::NEG_INFINITY; 3], 2, &mut rng).unwrap_err();
        assert!(matches!(err, SmcError::DegenerateWeights { .. }));
        assert!(matches!(ess(&[f64::NEG_INFINITY; 4]), Err(SmcError::DegenerateWeights { .. })));
    }

    #[test]
    fn uniform_frequencies_within_binomial_band() {
        let n = 8;
        let count = 10_000;
        let mut rng = RngStreams::from_seed(99).stream(5);
        let idx = resample(&vec![0.0; n], count, &mut rng).unwrap();
        let p = 1.0 / n as f64;
        let mean = count as f64 * p;
        let sd = (count as f64 * p * (1.0 - p)).sqrt();
        for i in 0..n {
            let freq = idx.iter().filter(|&&k| k == i).count() as f64;
            assert!((freq - mean).abs() <= 4.0 * sd, "index {i}: {freq} vs {mean}");
        }
    }

    #[test]
    fn systematic_respects_weights() {
        let mut rng = RngStreams::from_seed(3).stream(0);
        let lw = [0.0f64, 1.0f64.ln(), 2.0f64.ln()];
        let idx = resample_with(Resampling::Systematic, &lw, 400, &mut rng).unwrap();
        let c2 = idx.iter().filter(|&&k| k == 2).count();
        assert!((c2 as i64 - 200).abs() <= 1);
    }

    #[test]
    fn ess_examples() {
        assert!((ess(&[0.0; 10]).unwrap() - 10.0).abs() < 1e-12);
        assert!((ess(&[0.0, f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap() - 1.0).abs() < 1e-12);
        let lw = [2f64.ln(), 0.0, 0.0];
        assert!((ess(&lw).unwrap() - 16.0 / 6.0).abs() < 1e-12);
        // extreme but finite log-weights
        let lw = [1e6, 1e6 - 1.0, -1e6];
        let e = ess(&lw).unwrap();
        assert!(e >= 1.0 && e <= 3.0);
    }

    proptest::proptest! {
        #[test]
        fn ess_bounded_and_shift_invariant(lw in proptest::collection::vec(-1e6f64..1e6, 1..40), shift in -1e5f64..1e5) {
            let e = ess(&lw).unwrap();
            proptest::prop_assert!(e >= 1.0 && e <= lw.len() as f64);
            let shifted: Vec<f64> = lw.iter().map(|v| v + shift).collect();
            let e2 = ess(&shifted).unwrap();
            proptest::prop_assert!((e - e2).abs() <= 1e-9 * e);
        }
    }
}
