//! Interval estimates and seeded generators shared by the Monte Carlo code.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Resamples used by [`bootstrap_percentile`].
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// A point estimate with a 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            ci_low: value,
            ci_high: value,
        }
    }

    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}

/// Generator for work unit `stream` of an experiment seeded with `seed`.
/// Units are independent of scheduling order.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson(successes: usize, trials: usize) -> Estimate {
    assert!(trials > 0, "wilson interval needs at least one trial");
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Estimate {
        value: p,
        ci_low: (centre - half).max(0.0).min(p),
        ci_high: (centre + half).min(1.0).max(p),
    }
}

/// Mean computed as `x0 + Σ(x_i - x0)/n`, exact for constant data.
pub fn mean(xs: &[f64]) -> f64 {
    let Some(&x0) = xs.first() else {
        return f64::NAN;
    };
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Percentile bootstrap of `statistic` over resamples of `xs`. The point
/// value is the statistic on the full sample, and the interval is widened
/// to contain it.
pub fn bootstrap_percentile<F>(xs: &[f64], seed: u64, statistic: F) -> Estimate
where
    F: Fn(&[f64]) -> f64,
{
    let value = statistic(xs);
    if xs.len() < 2 || xs.iter().all(|&x| x == xs[0]) {
        return Estimate::exact(value);
    }
    let mut rng = stream_rng(seed, u64::MAX);
    let mut buf = vec![0.0; xs.len()];
    let mut stats: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = xs[rng.gen_range(0..xs.len())];
            }
            statistic(&buf)
        })
        .collect();
    stats.sort_by(|a, b| a.total_cmp(b));
    let lo = quantile_sorted(&stats, 0.025);
    let hi = quantile_sorted(&stats, 0.975);
    Estimate {
        value,
        ci_low: lo.min(value),
        ci_high: hi.max(value),
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_zero_successes() {
        let e = wilson(0, 2000);
        assert_eq!(e.value, 0.0);
        assert_eq!(e.ci_low, 0.0);
        // z^2 / (n + z^2)
        let expected = Z95 * Z95 / (2000.0 + Z95 * Z95);
        assert!((e.ci_high - expected).abs() < 1e-15);
    }

    #[test]
    fn wilson_known_value() {
        // 10/100: reference (0.05522914, 0.17436566)
        let e = wilson(10, 100);
        assert!((e.ci_low - 0.055_229_14).abs() < 1e-6);
        assert!((e.ci_high - 0.174_365_66).abs() < 1e-6);
    }

    #[test]
    fn mean_is_exact_for_constants() {
        let xs = vec![0.3; 5000];
        assert_eq!(mean(&xs), 0.3);
        assert_eq!(variance(&xs), 0.0);
        assert!((mean(&[1.0, 2.0, 6.0]) - 3.0).abs() < 1e-15);
        assert!((variance(&[1.0, 2.0, 6.0]) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_constant_has_zero_width() {
        let e = bootstrap_percentile(&[2.0; 50], 1, mean);
        assert_eq!(e, Estimate::exact(2.0));
    }

    #[test]
    fn bootstrap_is_seeded() {
        let xs: Vec<f64> = (0..40).map(|i| (i % 7) as f64).collect();
        let a = bootstrap_percentile(&xs, 9, mean);
        let b = bootstrap_percentile(&xs, 9, mean);
        assert_eq!(a, b);
        assert!(a.ci_low < a.value && a.value < a.ci_high);
    }

    #[test]
    fn streams_differ() {
        let a: u64 = stream_rng(1, 0).gen();
        let b: u64 = stream_rng(1, 1).gen();
        assert_ne!(a, b);
        let c: u64 = stream_rng(1, 0).gen();
        assert_eq!(a, c);
    }
}
