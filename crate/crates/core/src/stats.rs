//! Summary statistics over replica samples.

use serde::{Deserialize, Serialize};

/// A statistic and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64) -> Self {
        Self { value, stderr }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }
}

/// Sample mean with `s/√n`.
pub fn mean(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate::new(f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Estimate::new(m, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    Estimate::new(m, (var / n as f64).sqrt())
}

/// Sorted copy, NaNs last.
pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantile with a distribution-free standard error: half the spread of the
/// order statistics at ranks `np ± √(np(1−p))`.
pub fn quantile(xs: &[f64], p: f64) -> Estimate {
    let s = sorted(xs);
    let n = s.len() as f64;
    let value = quantile_sorted(&s, p);
    if s.len() < 2 {
        return Estimate::new(value, f64::NAN);
    }
    let half = (n * p * (1.0 - p)).sqrt() / (n - 1.0);
    let lo = quantile_sorted(&s, p - half);
    let hi = quantile_sorted(&s, p + half);
    Estimate::new(value, 0.5 * (hi - lo))
}

pub fn median(xs: &[f64]) -> Estimate {
    quantile(xs, 0.5)
}

/// Fraction of samples with `x ≥ threshold`, with the binomial error.
pub fn exceedance(xs: &[f64], threshold: f64) -> Estimate {
    let n = xs.len() as f64;
    let p = xs.iter().filter(|&&x| x >= threshold).count() as f64 / n;
    Estimate::new(p, (p * (1.0 - p) / n).sqrt())
}

/// `max/min` over positive values; infinite when the minimum is not positive.
pub fn spread_ratio(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile_sorted(&sorted(&xs), 0.5), 2.5);
        assert_eq!(quantile_sorted(&sorted(&xs), 0.0), 1.0);
        assert_eq!(quantile_sorted(&sorted(&xs), 1.0), 4.0);
        assert!(median(&xs).stderr > 0.0);
    }

    #[test]
    fn mean_and_exceedance() {
        let m = mean(&[1.0, 2.0, 3.0]);
        assert_eq!(m.value, 2.0);
        assert!((m.stderr - (1.0_f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(exceedance(&[0.0, 1.0, 2.0, 3.0], 2.0).value, 0.5);
        assert_eq!(spread_ratio(&[2.0, 4.0, 3.0]), 2.0);
    }
}
