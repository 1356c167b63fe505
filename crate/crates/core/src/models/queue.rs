//! Single-server queue driven by the Lindley recursion
//! `W_{n+1} = (W_n + Y_n − ε_{n+1})₊`.

use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp, LogNormal};
use rayon::prelude::*;

use crate::coupling::SplitMinorization;
use crate::env::{sample_path, EnvProcess};
use crate::error::{Error, Result};
use crate::mcre::{choose_epsilon, gamma_bar_curve, DriftSpec, GammaBarReport, MinorSpec, RandomKernel, StateSpace};
use crate::rng::SeedStream;
use crate::stats::{self, normal_cdf, normal_quantile};

/// Draws used when an inter-arrival law has no closed-form Laplace transform.
pub const MGF_MC_DRAWS: usize = 200_000;

/// `max(w + y − e, 0)`.
pub fn lindley_step(w: f64, y: f64, e: f64) -> Result<f64> {
    if !(w >= 0.0 && y >= 0.0 && e >= 0.0) {
        return Err(Error::Validation(format!("lindley step needs non-negative inputs, got w = {w}, y = {y}, e = {e}")));
    }
    Ok((w + y - e).max(0.0))
}

/// Law of the i.i.d. inter-arrival times `ε_n`.
#[derive(Debug, Clone, PartialEq)]
pub enum InterArrival {
    Exponential { rate: f64 },
    /// Uniform on `[shift, shift + width]`.
    ShiftedUniform { shift: f64, width: f64 },
    Deterministic { value: f64 },
    /// `exp(N(mu, sigma²))`; no closed-form Laplace transform.
    LogNormal { mu: f64, sigma: f64 },
}

impl InterArrival {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Self::ShiftedUniform { shift, width } => shift >= 0.0 && width >= 0.0 && (shift + width).is_finite(),
            Self::Deterministic { value } => value >= 0.0 && value.is_finite(),
            Self::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0 && sigma.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid inter-arrival law {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
            Self::ShiftedUniform { shift, width } => shift + width * rng.random::<f64>(),
            Self::Deterministic { value } => value,
            Self::LogNormal { mu, sigma } => LogNormal::new(mu, sigma).expect("validated").sample(rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::ShiftedUniform { shift, width } => shift + width / 2.0,
            Self::Deterministic { value } => value,
            Self::LogNormal { mu, sigma } => (mu + sigma * sigma / 2.0).exp(),
        }
    }

    /// `ln P(ε ≥ t)`.
    pub fn log_survival(&self, t: f64) -> f64 {
        match *self {
            Self::Exponential { rate } => {
                if t <= 0.0 {
                    0.0
                } else {
                    -rate * t
                }
            }
            Self::ShiftedUniform { shift, width } => {
                if t <= shift {
                    0.0
                } else if t >= shift + width {
                    f64::NEG_INFINITY
                } else {
                    ((shift + width - t) / width).ln()
                }
            }
            Self::Deterministic { value } => {
                if t <= value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Self::LogNormal { mu, sigma } => {
                if t <= 0.0 {
                    0.0
                } else {
                    normal_cdf(-(t.ln() - mu) / sigma).ln()
                }
            }
        }
    }

    /// `P(ε < t)`.
    pub fn prob_below(&self, t: f64) -> f64 {
        -self.log_survival(t).exp_m1()
    }

    /// Draw from the law of `ε` conditioned on `ε < t`, by inverting the CDF
    /// at `u · P(ε < t)`.
    pub fn sample_below(&self, t: f64, u: f64) -> Result<f64> {
        let p = self.prob_below(t);
        if !(p > 0.0) {
            return Err(Error::Numeric(format!("P(eps < {t}) = 0 for {self:?}")));
        }
        Ok(match *self {
            Self::Exponential { rate } => -(-u * p).ln_1p() / rate,
            Self::ShiftedUniform { shift, width } => shift + u * (t.min(shift + width) - shift),
            Self::Deterministic { value } => value,
            Self::LogNormal { mu, sigma } => (mu + sigma * normal_quantile(u * p)).exp(),
        })
    }

    /// Lebesgue density, when there is one.
    pub fn density(&self, e: f64) -> Option<f64> {
        match *self {
            Self::Exponential { rate } => Some(if e < 0.0 { 0.0 } else { rate * (-rate * e).exp() }),
            Self::ShiftedUniform { shift, width } if width > 0.0 => {
                Some(if e >= shift && e <= shift + width { 1.0 / width } else { 0.0 })
            }
            Self::ShiftedUniform { .. } | Self::Deterministic { .. } => None,
            Self::LogNormal { mu, sigma } => Some(if e <= 0.0 {
                0.0
            } else {
                let z = (e.ln() - mu) / sigma;
                (-0.5 * z * z).exp() / (e * sigma * (2.0 * std::f64::consts::PI).sqrt())
            }),
        }
    }

    /// Closed-form `E e^{−sε}` for `s > 0`, when available.
    pub fn laplace(&self, s: f64) -> Option<f64> {
        match *self {
            Self::Exponential { rate } => Some(rate / (rate + s)),
            Self::ShiftedUniform { shift, width } => Some(if width == 0.0 {
                (-s * shift).exp()
            } else {
                (-s * shift).exp() * -(-s * width).exp_m1() / (s * width)
            }),
            Self::Deterministic { value } => Some((-s * value).exp()),
            Self::LogNormal { .. } => None,
        }
    }
}

/// How `E e^{−ᾱε}` was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LaplaceSource {
    ClosedForm,
    MonteCarlo { draws: usize, std_error: f64 },
}

/// `E e^{−sε}`, by closed form or, failing that, by Monte Carlo on a fixed stream.
pub fn laplace_transform(law: &InterArrival, s: f64) -> (f64, LaplaceSource) {
    if let Some(v) = law.laplace(s) {
        return (v, LaplaceSource::ClosedForm);
    }
    let stream = SeedStream::new(0).derive("queue-laplace");
    let values: Vec<f64> = (0..MGF_MC_DRAWS as u64)
        .into_par_iter()
        .map(|i| (-s * law.sample(&mut stream.rng(i))).exp())
        .collect();
    (stats::mean(&values), LaplaceSource::MonteCarlo { draws: MGF_MC_DRAWS, std_error: stats::std_error(&values) })
}

/// Kernel `Q(y, w, ·) = Law((w + y − ε₁)₊)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueKernel {
    pub interarrival: InterArrival,
}

impl RandomKernel for QueueKernel {
    type State = f64;

    fn step<R: Rng + ?Sized>(&self, y: f64, w: &f64, rng: &mut R) -> f64 {
        (w + y - self.interarrival.sample(rng)).max(0.0)
    }

    fn space(&self) -> StateSpace {
        StateSpace::Continuous { dim: 1 }
    }

    /// Density of the absolutely continuous part on `(0, ∞)`; the atom at 0
    /// has mass `P(ε ≥ w + y)`.
    fn density(&self, y: f64, w: &f64, next: &f64) -> Option<f64> {
        if *next <= 0.0 {
            return None;
        }
        self.interarrival.density(w + y - next)
    }
}

/// Largest-feasible-ᾱ search output.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaBarSearch {
    pub alpha_bar: f64,
    /// `(α, λ_n(α) estimate, upper CI)` per grid point.
    pub grid: Vec<(f64, f64, f64)>,
    pub mean_increment: f64,
    pub mean_increment_se: f64,
}

/// Finds `ᾱ` with `λ_n(ᾱ) = (1/n) ln E e^{ᾱ Σ_{j=1}^n (Y_{j−1} − ε_j)} < 0`:
/// the largest grid point whose upper CI is negative, halved.
pub fn find_alpha_bar(
    service: &EnvProcess,
    interarrival: &InterArrival,
    grid: &[f64],
    horizon: usize,
    reps: usize,
    stream: &SeedStream,
) -> Result<AlphaBarSearch> {
    crate::mcre::verify_reps(reps)?;
    if grid.is_empty() || grid.iter().any(|a| !(*a > 0.0) || !a.is_finite()) || horizon == 0 {
        return Err(Error::Argument("alpha grid must be non-empty and positive, horizon at least 1".into()));
    }
    let paths = stream.derive("paths");
    let arrivals = stream.derive("arrivals");
    let sums: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let path = sample_path(service, 0, horizon as i64 - 1, &mut paths.rng(r))?;
            let mut rng = arrivals.rng(r);
            Ok(path.values().iter().map(|y| y - interarrival.sample(&mut rng)).sum())
        })
        .collect::<Result<_>>()?;
    let per_step: Vec<f64> = sums.iter().map(|s| s / horizon as f64).collect();
    let mean_increment = stats::mean(&per_step);
    let mean_increment_se = stats::std_error(&per_step);
    if !(mean_increment + 3.0 * mean_increment_se < 0.0) {
        return Err(Error::ModelInfeasible(format!(
            "long-time contractivity cannot hold: E[Y - eps] estimate {mean_increment} (se {mean_increment_se}) is not below 0"
        )));
    }
    let n = horizon as f64;
    let mut rows = Vec::with_capacity(grid.len());
    for (i, &a) in grid.iter().enumerate() {
        let logs: Vec<f64> = sums.iter().map(|s| a * s).collect();
        let estimate = stats::log_mean_exp(&logs) / n;
        let boot = stats::bootstrap(reps, stats::BOOTSTRAP_RESAMPLES, 0.95, &stream.derive(&format!("boot-{i}")), |idx| {
            let sample: Vec<f64> = idx.iter().map(|&j| logs[j]).collect();
            stats::log_mean_exp(&sample) / n
        });
        rows.push((a, estimate, boot.ci_high));
    }
    let best = rows.iter().filter(|r| r.2 < 0.0).map(|r| r.0).fold(f64::NAN, f64::max);
    if best.is_nan() {
        return Err(Error::ModelInfeasible("long-time contractivity not found: no alpha on the grid gives a negative exponent".into()));
    }
    Ok(AlphaBarSearch { alpha_bar: best / 2.0, grid: rows, mean_increment, mean_increment_se })
}

/// How `ᾱ` is fixed.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaBarChoice {
    Fixed(f64),
    Search { grid: Vec<f64>, horizon: usize, reps: usize },
}

/// Inputs for [`QueueModel::build`].
#[derive(Debug, Clone, PartialEq)]
pub struct QueueParams {
    pub service: EnvProcess,
    pub interarrival: InterArrival,
    /// Almost-sure bound `M` on the service times.
    pub bound: f64,
    pub alpha_bar: AlphaBarChoice,
    /// Horizons for the γ̄ estimate.
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub theta: f64,
}

/// Built queue with its drift and minorization constants.
#[derive(Clone)]
pub struct QueueModel {
    pub params: QueueParams,
    pub kernel: QueueKernel,
    pub alpha_bar: f64,
    pub alpha_search: Option<AlphaBarSearch>,
    /// `E e^{−ᾱε₁}`.
    pub laplace: f64,
    pub laplace_source: LaplaceSource,
    pub k: f64,
    pub gamma_bar: GammaBarReport,
    pub epsilon: f64,
    pub tau: f64,
    pub drift: DriftSpec<f64>,
    pub minor: MinorSpec<f64>,
}

impl std::fmt::Debug for QueueModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QueueModel")
            .field("alpha_bar", &self.alpha_bar)
            .field("laplace", &self.laplace)
            .field("k", &self.k)
            .field("gamma_bar", &self.gamma_bar.gamma_bar)
            .field("epsilon", &self.epsilon)
            .field("tau", &self.tau)
            .finish()
    }
}

/// `τ = M + 4 / (1/√γ̄ − 1)`.
pub fn queue_tau(bound: f64, gamma_bar: f64) -> f64 {
    bound + 4.0 / (1.0 / gamma_bar.sqrt() - 1.0)
}

impl QueueModel {
    pub fn build(params: QueueParams, stream: &SeedStream) -> Result<Self> {
        params.service.validate()?;
        params.interarrival.validate()?;
        let m = params.bound;
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Validation(format!("service bound M = {m} must be positive and finite")));
        }
        match params.service.bounds() {
            Some((lo, hi)) if lo >= 0.0 && hi <= m => {}
            other => {
                return Err(Error::Validation(format!("service times must lie in [0, {m}], process range is {other:?}")))
            }
        }
        let service_mean = params.service.mean();
        let arrival_mean = params.interarrival.mean();
        if !(service_mean < arrival_mean) {
            // Jensen: ln E ∏ γ(Y_k) >= n ᾱ (E Y − E ε) >= 0 for every ᾱ.
            return Err(Error::ModelInfeasible(format!(
                "long-time contractivity cannot hold for any alpha_bar: mean service {service_mean} is not below mean inter-arrival {arrival_mean}"
            )));
        }
        let (alpha_bar, alpha_search) = match &params.alpha_bar {
            AlphaBarChoice::Fixed(a) => {
                if !(*a > 0.0 && a.is_finite()) {
                    return Err(Error::Validation(format!("alpha_bar = {a} must be positive")));
                }
                (*a, None)
            }
            AlphaBarChoice::Search { grid, horizon, reps } => {
                let s = find_alpha_bar(&params.service, &params.interarrival, grid, *horizon, *reps, &stream.derive("alpha-bar"))?;
                (s.alpha_bar, Some(s))
            }
        };
        let (laplace, laplace_source) = laplace_transform(&params.interarrival, alpha_bar);
        let k = (alpha_bar * m).exp();
        let drift = DriftSpec::new(move |w: &f64| (alpha_bar * w).exp_m1(), move |y| (alpha_bar * y).exp() * laplace, move |_| k);
        if let Some(support) = params.service.support() {
            drift.validate_on(&support)?;
        }
        let gamma_bar = gamma_bar_curve(&params.service, &drift, &params.n_grid, params.reps, &stream.derive("gamma-bar"))?;
        if !gamma_bar.pass {
            return Err(Error::ContractivityViolation { gamma_bar: gamma_bar.ci_high });
        }
        let epsilon = choose_epsilon(gamma_bar.gamma_bar)?;
        let tau = queue_tau(m, gamma_bar.gamma_bar);
        if params.interarrival.log_survival(tau) == f64::NEG_INFINITY {
            return Err(Error::ModelInfeasible(format!("P(eps >= tau) = 0 at tau = {tau}")));
        }
        let law = params.interarrival.clone();
        let g = drift.clone();
        let log_mass = move |y: f64| {
            let r = 2.0 * k / (epsilon * g.gamma(y));
            let w_max = r.ln_1p() / alpha_bar;
            law.log_survival(tau.max(w_max + y))
        };
        let minor = MinorSpec::new(epsilon, log_mass, |_, _: &mut dyn RngCore| 0.0, gamma_bar.gamma_bar, params.theta)?;
        Ok(Self {
            kernel: QueueKernel { interarrival: params.interarrival.clone() },
            params,
            alpha_bar,
            alpha_search,
            laplace,
            laplace_source,
            k,
            gamma_bar,
            epsilon,
            tau,
            drift,
            minor,
        })
    }

    /// `γ(y) = e^{ᾱy} E e^{−ᾱε₁}`.
    pub fn gamma(&self, y: f64) -> f64 {
        self.drift.gamma(y)
    }

    /// `α = P(ε₁ < τ)`.
    pub fn alpha_tau(&self) -> f64 {
        self.params.interarrival.prob_below(self.tau)
    }

    /// Splitting coupling along `Q(y, w, ·) >= (1 − α(y)) δ₀`. The residual law
    /// keeps the leftover atom at 0 and otherwise draws `ε` below `w + y`.
    pub fn split_coupling(&self) -> SplitMinorization<f64> {
        let law = self.params.interarrival.clone();
        let minor = self.minor.clone();
        let residual = Arc::new(move |y: f64, w: &f64, rng: &mut dyn RngCore| -> Result<f64> {
            let mass = minor.log_mass(y).exp();
            let t = w + y;
            let atom = law.log_survival(t).exp();
            if atom < mass * (1.0 - 1e-12) {
                return Err(Error::Numeric(format!("atom P(eps >= {t}) = {atom} below minorizing mass {mass}")));
            }
            if mass >= 1.0 {
                return Err(Error::Numeric(format!("residual law undefined: alpha({y}) = 0")));
            }
            let leftover = ((atom - mass) / (1.0 - mass)).max(0.0);
            if rng.random::<f64>() < leftover {
                return Ok(0.0);
            }
            let e = law.sample_below(t, rng.random::<f64>())?;
            Ok((t - e).max(0.0))
        });
        SplitMinorization::new(self.drift.clone(), self.minor.clone(), residual)
    }
}
