//! Monte-Carlo verifiers for the drift, long-time contractivity and
//! smallness conditions.

use rayon::prelude::*;

use super::{DriftSpec, RandomKernel};
use crate::env::{sample_path, EnvProcess};
use crate::error::{Error, Result};
use crate::report::{fmt_f64, CsvRecord};
use crate::rng::{SeedStream, SimRng};
use crate::stats;

/// Minimum replication count accepted by the verifiers.
pub const MIN_REPS: usize = 1_000;

/// Drift verdicts allow the estimate to exceed the bound by this many
/// standard errors.
pub const DEFAULT_DRIFT_TOLERANCE_SE: f64 = 3.0;

/// One drift probe: MC estimate of `[Q(y)V](x)` against `γ(y)V(x) + K(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    pub probe: String,
    pub estimate: f64,
    pub std_error: f64,
    pub bound: f64,
    pub pass: bool,
}

pub(crate) fn check_reps(reps: usize) -> Result<()> {
    if reps < MIN_REPS {
        return Err(Error::Argument(format!("reps = {reps} below the minimum of {MIN_REPS}")));
    }
    Ok(())
}

/// Mean and standard error of `V` over `reps` draws of a successor.
pub(crate) fn estimate_lyapunov_mean<S: std::fmt::Debug>(
    reps: usize,
    stream: &SeedStream,
    draw: impl Fn(&mut SimRng) -> S + Sync,
    v: impl Fn(&S) -> f64 + Sync,
) -> Result<(f64, f64)> {
    let values: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let next = draw(&mut stream.rng(i));
            let value = v(&next);
            if value.is_finite() {
                Ok(value)
            } else {
                Err(Error::Numeric(format!("V({next:?}) = {value} is not finite")))
            }
        })
        .collect::<Result<_>>()?;
    Ok((stats::mean(&values), stats::std_error(&values)))
}

/// Checks `[Q(y)V](x) <= γ(y)V(x) + K(y)` at each probe `(y, x)`.
pub fn drift_check<K: RandomKernel>(
    kernel: &K,
    drift: &DriftSpec<K::State>,
    probes: &[(f64, K::State)],
    reps: usize,
    tolerance_se: f64,
    stream: &SeedStream,
) -> Result<Vec<DriftReport>> {
    check_reps(reps)?;
    probes
        .iter()
        .enumerate()
        .map(|(i, (y, x))| {
            let sub = stream.derive(&format!("probe-{i}"));
            let (estimate, std_error) =
                estimate_lyapunov_mean(reps, &sub, |rng| kernel.step(*y, x, rng), |s| drift.v(s))?;
            let bound = drift.gamma(*y) * drift.v(x) + drift.k(*y);
            Ok(DriftReport {
                probe: format!("y={};x={:?}", fmt_f64(*y), x),
                estimate,
                std_error,
                bound,
                pass: estimate <= bound + tolerance_se * std_error,
            })
        })
        .collect()
}

/// Point of a curve indexed by horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub n: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Finite-horizon surrogate of `γ̄ = limsup E^{1/n}[K(Y_0) ∏ γ(Y_k)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaBarReport {
    pub points: Vec<CurvePoint>,
    /// Estimate at the largest horizon.
    pub gamma_bar: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Upper confidence bound at the largest horizon is below one.
    pub pass: bool,
}

fn check_grid(n_grid: &[usize]) -> Result<usize> {
    if n_grid.is_empty() || n_grid[0] == 0 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("horizon grid must be non-empty, positive and strictly increasing".into()));
    }
    Ok(*n_grid.last().unwrap())
}

/// Estimates `E[exp(L_n)]^{1/scale(n)}` on the grid, where `logs[r][j]` is
/// `L_{n_j}` for replication `r`. Logs are reduced with log-sum-exp.
fn log_moment_curve(
    logs: &[Vec<f64>],
    n_grid: &[usize],
    scale: impl Fn(usize) -> f64,
    stream: &SeedStream,
) -> Vec<CurvePoint> {
    n_grid
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let column: Vec<f64> = logs.iter().map(|r| r[j]).collect();
            let s = scale(n);
            let estimate = (stats::log_mean_exp(&column) / s).exp();
            let boot = stats::bootstrap(
                column.len(),
                stats::BOOTSTRAP_RESAMPLES,
                0.95,
                &stream.derive(&format!("bootstrap-{n}")),
                |idx| {
                    let picked: Vec<f64> = idx.iter().map(|&i| column[i]).collect();
                    (stats::log_mean_exp(&picked) / s).exp()
                },
            );
            CurvePoint { n, estimate, std_error: boot.std_error, ci_low: boot.ci_low, ci_high: boot.ci_high }
        })
        .collect()
}

fn gamma_bar_report(points: Vec<CurvePoint>) -> GammaBarReport {
    let last = *points.last().expect("non-empty grid");
    GammaBarReport { points, gamma_bar: last.estimate, ci_low: last.ci_low, ci_high: last.ci_high, pass: last.ci_high < 1.0 }
}

/// Estimates `E^{1/n}[K(Y_0) ∏_{k=1}^n γ(Y_k)]` along `n_grid`, sampling whole
/// environment paths so that dependence between `K(Y_0)` and the product is
/// kept.
pub fn gamma_bar_curve<S>(
    env: &EnvProcess,
    drift: &DriftSpec<S>,
    n_grid: &[usize],
    reps: usize,
    stream: &SeedStream,
) -> Result<GammaBarReport> {
    check_reps(reps)?;
    let n_max = check_grid(n_grid)?;
    let paths = stream.derive("paths");
    let logs: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let path = sample_path(env, 0, n_max as i64, &mut paths.rng(r))?;
            let ys = path.values();
            let mut acc = drift.k(ys[0]).ln();
            let mut out = Vec::with_capacity(n_grid.len());
            let mut next = 0;
            for (k, &y) in ys.iter().enumerate().skip(1) {
                acc += drift.gamma(y).ln();
                if n_grid[next] == k {
                    out.push(acc);
                    next += 1;
                    if next == n_grid.len() {
                        break;
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(gamma_bar_report(log_moment_curve(&logs, n_grid, |n| n as f64, stream)))
}

/// Block version: `E^{1/n}[K ∏_{i=1}^n γ(Y_{(i-1)p+1}, ..., Y_{ip})]`.
pub fn block_gamma_bar_curve(
    env: &EnvProcess,
    p: usize,
    block_gamma: &(dyn Fn(&[f64]) -> f64 + Sync),
    k: f64,
    n_grid: &[usize],
    reps: usize,
    stream: &SeedStream,
) -> Result<GammaBarReport> {
    check_reps(reps)?;
    if p == 0 {
        return Err(Error::Argument("block length must be at least 1".into()));
    }
    let n_max = check_grid(n_grid)?;
    let paths = stream.derive("paths");
    let logs: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let path = sample_path(env, 1, (n_max * p) as i64, &mut paths.rng(r))?;
            let mut acc = k.ln();
            let mut out = Vec::with_capacity(n_grid.len());
            let mut next = 0;
            for (i, block) in path.values().chunks_exact(p).enumerate() {
                acc += block_gamma(block).ln();
                if n_grid[next] == i + 1 {
                    out.push(acc);
                    next += 1;
                    if next == n_grid.len() {
                        break;
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(gamma_bar_report(log_moment_curve(&logs, n_grid, |n| n as f64, stream)))
}

/// How the smallness verdict was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmallnessRule {
    /// `Y_0` has finite support and `α < 1` on all of it, so
    /// `E^{1/n^θ}[α(Y_0)^n] <= (max α)^{n^{1-θ}} → 0`.
    BoundedAlpha,
    /// Curve non-increasing over its last points and below 0.5 at the
    /// largest horizon; a finite-horizon heuristic.
    Heuristic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallnessReport {
    pub points: Vec<CurvePoint>,
    pub rule: SmallnessRule,
    pub pass: bool,
}

/// Estimates `E^{1/n^θ}[α(Y_0)^n]` on `n_grid`. `log_mass(y)` is `ln(1 − α(y))`.
pub fn smallness_curve(
    env: &EnvProcess,
    log_mass: &(dyn Fn(f64) -> f64 + Sync),
    theta: f64,
    n_grid: &[usize],
    reps: usize,
    stream: &SeedStream,
) -> Result<SmallnessReport> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Argument(format!("theta = {theta} outside (0, 1)")));
    }
    check_reps(reps)?;
    check_grid(n_grid)?;
    let log_alpha = |y: f64| -> Result<f64> {
        let lm = log_mass(y);
        if !(lm <= 0.0) || lm == f64::NEG_INFINITY {
            return Err(Error::Validation(format!("alpha({y}) outside [0, 1): ln(1 - alpha) = {lm}")));
        }
        // ln α = ln(1 − e^{lm}).
        Ok((-lm.exp()).ln_1p())
    };
    let paths = stream.derive("paths");
    let logs: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let y0 = sample_path(env, 0, 0, &mut paths.rng(r))?.values()[0];
            let la = log_alpha(y0)?;
            Ok(n_grid.iter().map(|&n| if la == f64::NEG_INFINITY { la } else { n as f64 * la }).collect())
        })
        .collect::<Result<_>>()?;
    let points = log_moment_curve(&logs, n_grid, |n| (n as f64).powf(theta), stream);

    if let Some(support) = env.support() {
        for y in support {
            log_alpha(y)?;
        }
        return Ok(SmallnessReport { points, rule: SmallnessRule::BoundedAlpha, pass: true });
    }
    let tail = &points[points.len().saturating_sub(3)..];
    let decreasing = tail.windows(2).all(|w| w[1].estimate <= w[0].estimate);
    let pass = decreasing && points.last().unwrap().estimate < 0.5;
    Ok(SmallnessReport { points, rule: SmallnessRule::Heuristic, pass })
}

/// One verifier CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifierRow {
    pub assumption: String,
    pub probe: String,
    pub estimate: f64,
    pub std_error: f64,
    pub bound: f64,
    pub pass: bool,
}

impl CsvRecord for VerifierRow {
    const HEADER: &'static [&'static str] = &["assumption", "probe", "estimate", "stderr", "bound", "pass"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.assumption.clone(),
            self.probe.clone(),
            fmt_f64(self.estimate),
            fmt_f64(self.std_error),
            fmt_f64(self.bound),
            self.pass.to_string(),
        ]
    }
}

impl VerifierRow {
    pub fn from_drift(assumption: &str, r: &DriftReport) -> Self {
        Self {
            assumption: assumption.to_string(),
            probe: r.probe.clone(),
            estimate: r.estimate,
            std_error: r.std_error,
            bound: r.bound,
            pass: r.pass,
        }
    }

    /// Rows for each horizon of a curve; the bound is `bound` and only the
    /// last row carries the overall verdict.
    pub fn from_curve(assumption: &str, points: &[CurvePoint], bound: f64, pass: bool) -> Vec<Self> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| Self {
                assumption: assumption.to_string(),
                probe: format!("n={}", p.n),
                estimate: p.estimate,
                std_error: p.std_error,
                bound,
                pass: if i + 1 == points.len() { pass } else { p.ci_high < bound },
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{FiniteMarkov, Marginal};
    use crate::mcre::{DeterministicKernel, StateSpace};

    fn line() -> StateSpace {
        StateSpace::Continuous { dim: 1 }
    }

    #[test]
    fn identity_kernel_passes_drift() {
        let k = DeterministicKernel::new(line(), |_, x: &f64| *x);
        let d = DriftSpec::<f64>::new(|x| x * x, |_| 1.0, |_| 1.0);
        let r = drift_check(&k, &d, &[(0.0, 2.0), (1.0, -3.0)], 1000, 3.0, &SeedStream::new(1)).unwrap();
        assert!(r.iter().all(|p| p.pass));
        assert_eq!(r[0].estimate, 4.0);
        assert_eq!(r[0].bound, 5.0);
    }

    #[test]
    fn plus_one_kernel_fails_drift() {
        let k = DeterministicKernel::new(line(), |_, x: &f64| x + 1.0);
        let d = DriftSpec::<f64>::new(|x| *x, |_| 1.0, |_| 0.5);
        let r = drift_check(&k, &d, &[(0.0, 2.0)], 1000, 3.0, &SeedStream::new(1)).unwrap();
        assert!(!r[0].pass);
    }

    #[test]
    fn drift_check_rejects_few_reps_and_non_finite() {
        let k = DeterministicKernel::new(line(), |_, x: &f64| *x);
        let d = DriftSpec::<f64>::new(|x| *x, |_| 1.0, |_| 1.0);
        assert!(matches!(drift_check(&k, &d, &[(0.0, 1.0)], 10, 3.0, &SeedStream::new(1)), Err(Error::Argument(_))));
        let blow = DriftSpec::<f64>::new(|x| if *x > 0.0 { f64::INFINITY } else { 0.0 }, |_| 1.0, |_| 1.0);
        assert!(matches!(drift_check(&k, &blow, &[(0.0, 1.0)], 1000, 3.0, &SeedStream::new(1)), Err(Error::Numeric(_))));
    }

    #[test]
    fn gamma_bar_constant_environment() {
        let env = EnvProcess::Iid(Marginal::Constant(0.0));
        let d = DriftSpec::<f64>::new(|x| *x, |_| 0.9, |_| 2.0);
        let r = gamma_bar_curve(&env, &d, &[1, 10, 100], 1000, &SeedStream::new(3)).unwrap();
        let expected = 0.9 * 2f64.powf(0.01);
        assert!((r.gamma_bar - expected).abs() < 1e-12);
        assert!((expected - 0.9063).abs() < 1e-4);
        assert!(r.pass);
    }

    #[test]
    fn gamma_bar_boundary_fails() {
        let env = EnvProcess::Iid(Marginal::Constant(0.0));
        let d = DriftSpec::<f64>::new(|x| *x, |_| 1.0, |_| 1.0);
        let r = gamma_bar_curve(&env, &d, &[5, 50], 1000, &SeedStream::new(3)).unwrap();
        assert!(r.points.iter().all(|p| p.estimate == 1.0));
        assert!(!r.pass);
    }

    #[test]
    fn gamma_bar_iid_factorizes() {
        // Brute-force expectation: E[γ(Y)] = 1.2·2/3 + 0.5·1/3.
        let exact = 1.2 * 2.0 / 3.0 + 0.5 / 3.0;
        let env = EnvProcess::Iid(Marginal::Discrete { values: vec![0.0, 1.0], probs: vec![2.0 / 3.0, 1.0 / 3.0] });
        let d = DriftSpec::<f64>::new(|x| *x, |y| if y == 0.0 { 1.2 } else { 0.5 }, |_| 1.0);
        let r = gamma_bar_curve(&env, &d, &[1, 2, 5], 20_000, &SeedStream::new(8)).unwrap();
        for p in &r.points {
            assert!((p.estimate - exact).abs() < 0.02, "n={} {}", p.n, p.estimate);
            assert!(p.ci_low <= p.ci_high);
        }
    }

    #[test]
    fn gamma_bar_log_space_never_overflows() {
        let env = EnvProcess::Iid(Marginal::Discrete { values: vec![0.0, 1.0], probs: vec![0.5, 0.5] });
        let d = DriftSpec::<f64>::new(|x| *x, |y| if y == 0.0 { 1e6 } else { 1e-6 }, |_| 1.0);
        let r = gamma_bar_curve(&env, &d, &[10, 1000, 10_000], 1000, &SeedStream::new(2)).unwrap();
        assert!(r.points.iter().all(|p| p.estimate.is_finite() && p.ci_high.is_finite()));
    }

    #[test]
    fn gamma_bar_rejects_bad_grid() {
        let env = EnvProcess::Iid(Marginal::Constant(0.0));
        let d = DriftSpec::<f64>::new(|x| *x, |_| 0.5, |_| 1.0);
        assert!(gamma_bar_curve(&env, &d, &[10, 5], 1000, &SeedStream::new(0)).is_err());
        assert!(gamma_bar_curve(&env, &d, &[10], 999, &SeedStream::new(0)).is_err());
    }

    #[test]
    fn gamma_bar_keeps_markov_dependence() {
        // Sticky chain: the product is dominated by long runs, so it must
        // exceed the i.i.d. value E[γ]^n.
        let chain = FiniteMarkov::labelled(vec![vec![0.99, 0.01], vec![0.01, 0.99]]).unwrap();
        let env = EnvProcess::FiniteMarkov(chain);
        let d = DriftSpec::<f64>::new(|x| *x, |y| if y == 0.0 { 1.5 } else { 0.3 }, |_| 1.0);
        let r = gamma_bar_curve(&env, &d, &[20], 20_000, &SeedStream::new(5)).unwrap();
        assert!(r.gamma_bar > 0.95, "{}", r.gamma_bar);
    }

    #[test]
    fn smallness_constant_alpha() {
        let env = EnvProcess::Iid(Marginal::Constant(0.0));
        let lm = |_: f64| (0.1f64).ln();
        let r = smallness_curve(&env, &lm, 0.5, &[25, 100], 1000, &SeedStream::new(0)).unwrap();
        assert!((r.points[1].estimate - 0.9f64.powi(10)).abs() < 1e-12);
        assert!((r.points[1].estimate - 0.3487).abs() < 1e-4);
        assert!(r.pass);
        assert_eq!(r.rule, SmallnessRule::BoundedAlpha);
    }

    #[test]
    fn smallness_zero_alpha() {
        let env = EnvProcess::Iid(Marginal::Constant(0.0));
        let r = smallness_curve(&env, &|_| 0.0, 0.5, &[1, 10], 1000, &SeedStream::new(0)).unwrap();
        assert!(r.points.iter().all(|p| p.estimate == 0.0));
    }

    #[test]
    fn smallness_rejects_alpha_one() {
        let env = EnvProcess::Iid(Marginal::Constant(0.0));
        let r = smallness_curve(&env, &|_| f64::NEG_INFINITY, 0.5, &[1, 10], 1000, &SeedStream::new(0));
        assert!(matches!(r, Err(Error::Validation(_))));
        let r = smallness_curve(&env, &|_| 0.5, 0.5, &[1, 10], 1000, &SeedStream::new(0));
        assert!(matches!(r, Err(Error::Validation(_))));
    }
}
