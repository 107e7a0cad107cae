use crate::error::{Result, SmcError};
use crate::fk::ess;

/// Tempered weights `alpha * log w` whose ESS hits a floor.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperingResult {
    pub alpha: f64,
    pub tempered_log_weights: Vec<f64>,
    pub achieved_ess: f64,
}

const MAX_BISECTIONS: usize = 100;

fn scaled(log_weights: &[f64], max: f64, alpha: f64) -> Vec<f64> {
    log_weights
        .iter()
        .map(|w| if *w == f64::NEG_INFINITY { f64::NEG_INFINITY } else { alpha * (w - max) })
        .collect()
}

/// Find `alpha` in `(0, 1]` with `ess(alpha * log w)` within `tolerance` of
/// `target_ess`. Returns `alpha = 1` when the untempered ESS already reaches it.
pub fn temper_exponent(log_weights: &[f64], target_ess: f64, tolerance: f64) -> Result<TemperingResult> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(SmcError::DegenerateWeights { t: 0 });
    }
    let full = ess(log_weights)?;
    if full >= target_ess {
        return Ok(TemperingResult { alpha: 1.0, tempered_log_weights: log_weights.to_vec(), achieved_ess: full });
    }
    // ESS(alpha) decreases from the number of finite weights at 0 to `full` at 1
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best = (0.0, scaled(log_weights, max, 0.0));
    let mut best_ess = ess(&best.1)?;
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let lw = scaled(log_weights, max, mid);
        let e = ess(&lw)?;
        if (e - target_ess).abs() < (best_ess - target_ess).abs() {
            best = (mid, lw);
            best_ess = e;
        }
        if (e - target_ess).abs() <= tolerance {
            break;
        }
        if e > target_ess {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(TemperingResult { alpha: best.0, tempered_log_weights: best.1, achieved_ess: best_ess })
}
