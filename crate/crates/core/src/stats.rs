//! Small statistical toolkit shared by the verifiers and diagnostics.

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::rng::SeedStream;

/// `ln Σ exp(v)`, with `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln( mean(exp(v)) )`.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    log_sum_exp(values) - (values.len() as f64).ln()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

pub fn std_error(values: &[f64]) -> f64 {
    (variance(values) / values.len() as f64).sqrt()
}

/// Linear-interpolated quantile of an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile bootstrap of a statistic over replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bootstrap {
    pub ci_low: f64,
    pub ci_high: f64,
    pub std_error: f64,
    pub mean: f64,
}

impl Bootstrap {
    /// Interval shifted by the bootstrap bias estimate `mean − estimate`,
    /// clamped to `[floor, ceil]`. For biased statistics such as plug-in TV.
    pub fn bias_corrected(&self, estimate: f64, floor: f64, ceil: f64) -> Bootstrap {
        let bias = self.mean - estimate;
        Bootstrap {
            ci_low: (self.ci_low - bias).clamp(floor, ceil),
            ci_high: (self.ci_high - bias).clamp(floor, ceil),
            ..*self
        }
    }
}

pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Resamples `n` replication indices `resamples` times and evaluates
/// `statistic` on each index set. Non-finite replicates are dropped.
pub fn bootstrap<F>(n: usize, resamples: usize, level: f64, stream: &SeedStream, statistic: F) -> Bootstrap
where
    F: Fn(&[usize]) -> f64,
{
    let mut rng = stream.rng(0);
    let mut idx = vec![0usize; n];
    let mut stats = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for slot in idx.iter_mut() {
            *slot = rng.random_range(0..n);
        }
        let s = statistic(&idx);
        if s.is_finite() {
            stats.push(s);
        }
    }
    if stats.is_empty() {
        return Bootstrap { ci_low: f64::NAN, ci_high: f64::NAN, std_error: f64::NAN, mean: f64::NAN };
    }
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Bootstrap {
        ci_low: quantile_sorted(&stats, tail),
        ci_high: quantile_sorted(&stats, 1.0 - tail),
        std_error: variance(&stats).sqrt(),
        mean: mean(&stats),
    }
}

/// Wilson score interval for a binomial proportion at ~95% (z = 1.96).
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let v = a[i].min(b[j]);
        while i < na && a[i] <= v {
            i += 1;
        }
        while j < nb && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let sq = ne.sqrt();
    (d, kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d))
}

/// `P(K > x)` for the Kolmogorov distribution.
fn kolmogorov_survival(x: f64) -> f64 {
    if x < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Chi-square test of homogeneity for two count vectors over the same
/// categories. Categories empty in both samples are skipped. Returns
/// `(statistic, p_value)`.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let na: f64 = a.iter().sum::<u64>() as f64;
    let nb: f64 = b.iter().sum::<u64>() as f64;
    let total = na + nb;
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        cells += 1;
        let ea = na * col / total;
        let eb = nb * col / total;
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    if cells < 2 {
        return (0.0, 1.0);
    }
    let dist = ChiSquared::new((cells - 1) as f64).expect("positive degrees of freedom");
    (stat, 1.0 - dist.cdf(stat))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bias_correction_shifts_interval() {
        let b = Bootstrap { ci_low: 0.2, ci_high: 0.4, std_error: 0.05, mean: 0.3 };
        let c = b.bias_corrected(0.25, 0.0, 2.0);
        assert!((c.ci_low - 0.15).abs() < 1e-15 && (c.ci_high - 0.35).abs() < 1e-15);
        assert_eq!(b.bias_corrected(0.05, 0.0, 2.0).ci_low, 0.0);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_mean_exp(&[0.0, 0.0, 0.0]) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn wilson_covers_extremes() {
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn ks_identical_samples() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);
        let b: Vec<f64> = (0..100).map(|i| i as f64 + 1000.0).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert_eq!(d, 1.0);
        assert!(p < 1e-10);
    }

    #[test]
    fn ks_handles_ties_at_an_atom() {
        let a = vec![0.0, 0.0, 0.0, 1.0];
        let b = vec![0.0, 0.0, 1.0, 1.0];
        let (d, _) = ks_two_sample(&a, &b);
        assert!((d - 0.25).abs() < 1e-15);
    }

    #[test]
    fn chi_square_detects_shift() {
        let (_, p) = chi_square_homogeneity(&[500, 500], &[510, 490]);
        assert!(p > 0.5);
        let (_, p) = chi_square_homogeneity(&[500, 500], &[800, 200]);
        assert!(p < 1e-10);
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        for &x in &[-3.0, -1.0, 0.0, 0.5, 2.0] {
            assert!((normal_quantile(normal_cdf(x)) - x).abs() < 1e-9);
        }
        assert!((2.0 * normal_cdf(-1.0) - 0.317_310_507_862_914_1).abs() < 1e-10);
    }
}
