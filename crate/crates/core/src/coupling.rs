//! Marginal-preserving couplings of two copies of a chain driven by one
//! environment path.
//!
//! Every strategy draws a fixed amount from the caller's generator per step,
//! whatever the states are; state-dependent sampling happens on forked
//! generators. Swapping the two starting points therefore mirrors the run.

use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::env::{sample_path, EnvPath, EnvProcess};
use crate::error::{Error, Result};
use crate::mcre::{DriftSpec, MinorSpec, RandomKernel};
use crate::report::{fmt_f64, CsvRecord};
use crate::rng::{fork, SeedStream, SimRng};
use crate::stats;

/// A pair of states; once coalesced the pair moves as one.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState<S> {
    pub x1: S,
    pub x2: S,
    pub coalesced: bool,
}

impl<S: PartialEq + Clone> CoupledState<S> {
    pub fn new(x1: S, x2: S) -> Self {
        let coalesced = x1 == x2;
        Self { x1, x2, coalesced }
    }

    fn joined(x: S) -> Self {
        Self { x1: x.clone(), x2: x, coalesced: true }
    }

    pub fn swapped(&self) -> Self {
        Self { x1: self.x2.clone(), x2: self.x1.clone(), coalesced: self.coalesced }
    }
}

/// A one-step coupling of `Q(y, x1, ·)` and `Q(y, x2, ·)`.
pub trait CouplingStrategy<K: RandomKernel>: Sync {
    /// Coupled move from a pair that has not coalesced yet.
    fn split_step(&self, kernel: &K, y: f64, s: &CoupledState<K::State>, rng: &mut SimRng) -> Result<CoupledState<K::State>>;
}

/// One coupled transition. A coalesced pair receives one shared draw.
pub fn coupled_step<K, C>(
    strategy: &C,
    kernel: &K,
    y: f64,
    s: &CoupledState<K::State>,
    rng: &mut SimRng,
) -> Result<CoupledState<K::State>>
where
    K: RandomKernel,
    C: CouplingStrategy<K> + ?Sized,
{
    if s.coalesced {
        return Ok(CoupledState::joined(kernel.step(y, &s.x1, rng)));
    }
    strategy.split_step(kernel, y, s, rng)
}

/// Both copies use identical random numbers (common random numbers). They
/// coalesce once the updates agree exactly, e.g. when the Lindley map
/// clamps both waiting times to zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct SynchronousNoise;

impl<K: RandomKernel> CouplingStrategy<K> for SynchronousNoise {
    fn split_step(&self, kernel: &K, y: f64, s: &CoupledState<K::State>, rng: &mut SimRng) -> Result<CoupledState<K::State>> {
        let shared = fork(rng);
        let a = kernel.step(y, &s.x1, &mut shared.clone());
        let b = kernel.step(y, &s.x2, &mut shared.clone());
        Ok(CoupledState::new(a, b))
    }
}

pub type ResidualSampler<S> = Arc<dyn Fn(f64, &S, &mut dyn RngCore) -> Result<S> + Send + Sync>;

/// Splitting along the minorization `Q(y, x, ·) >= (1 − α(y)) κ(y, ·)` on the
/// small set `V⁻¹([0, R(y)])`: with probability `1 − α(y)` both copies jump to
/// one common `κ(y, ·)` draw, otherwise each moves by its residual law
/// `(Q(y, x, ·) − (1 − α(y)) κ(y, ·)) / α(y)`. Outside the small set both copies
/// take synchronous base steps.
pub struct SplitMinorization<S> {
    drift: DriftSpec<S>,
    minor: MinorSpec<S>,
    residual: ResidualSampler<S>,
}

impl<S> SplitMinorization<S> {
    pub fn new(drift: DriftSpec<S>, minor: MinorSpec<S>, residual: ResidualSampler<S>) -> Self {
        Self { drift, minor, residual }
    }

    pub fn drift(&self) -> &DriftSpec<S> {
        &self.drift
    }

    pub fn minor(&self) -> &MinorSpec<S> {
        &self.minor
    }

    /// Coupled move for a given splitting uniform `u`.
    pub fn step_with_uniform<K>(&self, kernel: &K, y: f64, s: &CoupledState<S>, u: f64, rng: &mut SimRng) -> Result<CoupledState<S>>
    where
        K: RandomKernel<State = S>,
        S: Clone + PartialEq,
    {
        let radius = self.minor.radius(&self.drift, y)?;
        let shared = fork(rng);
        let mut common = fork(rng);
        let in_small_set = self.drift.v(&s.x1) <= radius && self.drift.v(&s.x2) <= radius;
        if !in_small_set {
            let a = kernel.step(y, &s.x1, &mut shared.clone());
            let b = kernel.step(y, &s.x2, &mut shared.clone());
            return Ok(CoupledState::new(a, b));
        }
        if u <= self.minor.log_mass(y).exp() {
            return Ok(CoupledState::joined(self.minor.sample_kappa(y, &mut common)));
        }
        let a = (self.residual)(y, &s.x1, &mut shared.clone())?;
        let b = (self.residual)(y, &s.x2, &mut shared.clone())?;
        Ok(CoupledState::new(a, b))
    }
}

impl<K: RandomKernel> CouplingStrategy<K> for SplitMinorization<K::State> {
    fn split_step(&self, kernel: &K, y: f64, s: &CoupledState<K::State>, rng: &mut SimRng) -> Result<CoupledState<K::State>> {
        let u: f64 = rng.random();
        self.step_with_uniform(kernel, y, s, u, rng)
    }
}

/// Reflection-maximal coupling of `Normal(m1, λI)` and `Normal(m2, λI)`.
/// Returns `(z1, z2, same)`; `same` holds exactly when `z1 == z2`, which
/// happens with probability `2Φ(−|m1 − m2| / (2√λ))`.
pub fn maximal_gaussian_coupling<R: Rng + ?Sized>(
    m1: &DVector<f64>,
    m2: &DVector<f64>,
    variance: f64,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>, bool)> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::Validation(format!("variance {variance} must be positive")));
    }
    if m1.len() != m2.len() {
        return Err(Error::Validation(format!("means of dimension {} and {}", m1.len(), m2.len())));
    }
    let sigma = variance.sqrt();
    let xi = DVector::from_fn(m1.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let u: f64 = rng.random();
    let z1 = m1 + &xi * sigma;
    let delta = (m1 - m2) / sigma;
    let dist = delta.norm();
    if dist == 0.0 {
        return Ok((z1.clone(), z1, true));
    }
    // Accept z2 = z1 with probability φ(ξ + Δ) / φ(ξ).
    let log_ratio = -0.5 * ((&xi + &delta).norm_squared() - xi.norm_squared());
    if u.ln() <= log_ratio {
        return Ok((z1.clone(), z1, true));
    }
    let e = delta / dist;
    let reflected = &xi - &e * (2.0 * e.dot(&xi));
    let z2 = m2 + reflected * sigma;
    Ok((z1, z2, false))
}

/// Maximal coupling of isotropic Gaussian one-step laws (e.g. the Langevin
/// step).
#[derive(Debug, Clone, Copy, Default)]
pub struct MaximalGaussian;

impl<K: RandomKernel<State = DVector<f64>>> CouplingStrategy<K> for MaximalGaussian {
    fn split_step(&self, kernel: &K, y: f64, s: &CoupledState<DVector<f64>>, rng: &mut SimRng) -> Result<CoupledState<DVector<f64>>> {
        let law = |x| {
            kernel
                .isotropic_gaussian(y, x)
                .ok_or_else(|| Error::Validation("maximal Gaussian coupling needs an isotropic Gaussian one-step law".into()))
        };
        let (m1, v1) = law(&s.x1)?;
        let (m2, v2) = law(&s.x2)?;
        if v1 != v2 {
            return Err(Error::Validation(format!("one-step variances differ: {v1} vs {v2}")));
        }
        let (z1, z2, same) = maximal_gaussian_coupling(&m1, &m2, v1, rng)?;
        Ok(CoupledState { x1: z1, x2: z2, coalesced: same })
    }
}

/// First coalescence time, or the horizon it was not reached within.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingTime {
    At(usize),
    NotWithin(usize),
}

impl CouplingTime {
    pub fn finite(&self) -> Option<usize> {
        match self {
            CouplingTime::At(t) => Some(*t),
            CouplingTime::NotWithin(_) => None,
        }
    }

    /// Whether the copies still differ at time `n`.
    pub fn uncoupled_at(&self, n: usize) -> bool {
        match self {
            CouplingTime::At(t) => n < *t,
            CouplingTime::NotWithin(_) => true,
        }
    }
}

/// Paired trajectory over `0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingRun<S> {
    pub trajectory: Vec<CoupledState<S>>,
    pub coupling_time: CouplingTime,
    pub visit_times: Vec<usize>,
}

fn check_horizon(path: &EnvPath, horizon: usize) -> Result<()> {
    if horizon > 0 && (path.start() > 0 || path.end() < horizon as i64 - 1) {
        return Err(Error::Range(format!(
            "horizon {horizon} needs environment times [0, {}], window is [{}, {}]",
            horizon as i64 - 1,
            path.start(),
            path.end()
        )));
    }
    Ok(())
}

/// Runs the coupled pair for `horizon` steps along `path` (times `0..horizon`).
pub fn run_coupling<K, C>(
    kernel: &K,
    strategy: &C,
    x1: K::State,
    x2: K::State,
    path: &EnvPath,
    horizon: usize,
    rng: &mut SimRng,
) -> Result<CouplingRun<K::State>>
where
    K: RandomKernel,
    C: CouplingStrategy<K> + ?Sized,
{
    check_horizon(path, horizon)?;
    let mut state = CoupledState::new(x1, x2);
    let mut coupling_time = if state.coalesced { CouplingTime::At(0) } else { CouplingTime::NotWithin(horizon) };
    let mut trajectory = Vec::with_capacity(horizon + 1);
    trajectory.push(state.clone());
    for t in 0..horizon {
        state = coupled_step(strategy, kernel, path.at(t as i64)?, &state, rng)?;
        if state.coalesced && coupling_time.finite().is_none() {
            coupling_time = CouplingTime::At(t + 1);
        }
        trajectory.push(state.clone());
    }
    Ok(CouplingRun { trajectory, coupling_time, visit_times: Vec::new() })
}

/// Times `t` with `V(x1_t) + V(x2_t) <= R(y_t)`.
pub fn visit_times<S>(run: &CouplingRun<S>, minor: &MinorSpec<S>, drift: &DriftSpec<S>, path: &EnvPath) -> Result<Vec<usize>> {
    let mut visits = Vec::new();
    for (t, s) in run.trajectory.iter().enumerate() {
        let Some(y) = path.get(t as i64) else { break };
        if drift.v(&s.x1) + drift.v(&s.x2) <= minor.radius(drift, y)? {
            visits.push(t);
        }
    }
    Ok(visits)
}

impl<S> CouplingRun<S> {
    /// Fills [`CouplingRun::visit_times`].
    pub fn record_visits(&mut self, minor: &MinorSpec<S>, drift: &DriftSpec<S>, path: &EnvPath) -> Result<()> {
        self.visit_times = visit_times(self, minor, drift, path)?;
        Ok(())
    }
}

fn coupling_time_on<K, C>(kernel: &K, strategy: &C, x1: &K::State, x2: &K::State, ys: &[f64], rng: &mut SimRng) -> Result<CouplingTime>
where
    K: RandomKernel,
    C: CouplingStrategy<K> + ?Sized,
{
    let mut state = CoupledState::new(x1.clone(), x2.clone());
    if state.coalesced {
        return Ok(CouplingTime::At(0));
    }
    for (t, &y) in ys.iter().enumerate() {
        state = strategy.split_step(kernel, y, &state, rng)?;
        if state.coalesced {
            return Ok(CouplingTime::At(t + 1));
        }
    }
    Ok(CouplingTime::NotWithin(ys.len()))
}

/// Estimated `P(X_n^{x1} != X_n^{x2})` and the TV bound `2 P(...)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingPoint {
    pub n: usize,
    pub not_coupled: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub tv_bound: f64,
}

impl CsvRecord for CouplingPoint {
    const HEADER: &'static [&'static str] = &["n", "not_coupled_estimate", "ci_low", "ci_high", "tv_bound"];

    fn fields(&self) -> Vec<String> {
        vec![self.n.to_string(), fmt_f64(self.not_coupled), fmt_f64(self.ci_low), fmt_f64(self.ci_high), fmt_f64(self.tv_bound)]
    }
}

/// Coupling times of `reps` independent coupled runs up to `horizon`, each
/// with its own environment path.
pub fn coupling_times<K, C>(
    kernel: &K,
    strategy: &C,
    x1: &K::State,
    x2: &K::State,
    env: &EnvProcess,
    horizon: usize,
    reps: usize,
    stream: &SeedStream,
) -> Result<Vec<CouplingTime>>
where
    K: RandomKernel,
    C: CouplingStrategy<K> + ?Sized,
{
    let env_stream = stream.derive("env");
    let chain_stream = stream.derive("chain");
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let ys = if horizon == 0 {
                Vec::new()
            } else {
                sample_path(env, 0, horizon as i64 - 1, &mut env_stream.rng(r))?.values().to_vec()
            };
            coupling_time_on(kernel, strategy, x1, x2, &ys, &mut chain_stream.rng(r))
        })
        .collect()
}

/// Non-coalescence probability along `n_grid`, computed from nested
/// horizons of the same runs so the curve is non-increasing.
pub fn coupling_prob_curve<K, C>(
    kernel: &K,
    strategy: &C,
    x1: &K::State,
    x2: &K::State,
    env: &EnvProcess,
    n_grid: &[usize],
    reps: usize,
    stream: &SeedStream,
) -> Result<Vec<CouplingPoint>>
where
    K: RandomKernel,
    C: CouplingStrategy<K> + ?Sized,
{
    crate::mcre::verify_reps(reps)?;
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("horizon grid must be strictly increasing".into()));
    }
    let horizon = n_grid.last().copied().unwrap_or(0);
    let times = coupling_times(kernel, strategy, x1, x2, env, horizon, reps, stream)?;
    Ok(n_grid
        .iter()
        .map(|&n| {
            let uncoupled = times.iter().filter(|t| t.uncoupled_at(n)).count();
            let p = uncoupled as f64 / reps as f64;
            let (ci_low, ci_high) = stats::wilson_interval(uncoupled, reps);
            CouplingPoint { n, not_coupled: p, ci_low, ci_high, tv_bound: 2.0 * p }
        })
        .collect())
}

/// Time-`n` pairs of `reps` coupled runs, each on a fresh environment path.
pub fn coupled_endpoints<K, C>(
    kernel: &K,
    strategy: &C,
    x1: &K::State,
    x2: &K::State,
    env: &EnvProcess,
    n: usize,
    reps: usize,
    stream: &SeedStream,
) -> Result<Vec<CoupledState<K::State>>>
where
    K: RandomKernel,
    C: CouplingStrategy<K> + ?Sized,
{
    let env_stream = stream.derive("env");
    let chain_stream = stream.derive("chain");
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut state = CoupledState::new(x1.clone(), x2.clone());
            if n == 0 {
                return Ok(state);
            }
            let path = sample_path(env, 0, n as i64 - 1, &mut env_stream.rng(r))?;
            let mut rng = chain_stream.rng(r);
            for &y in path.values() {
                state = coupled_step(strategy, kernel, y, &state, &mut rng)?;
            }
            Ok(state)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcre::{DeterministicKernel, StateSpace};

    #[test]
    fn coalesced_pair_stays_together() {
        let k = crate::mcre::FiniteKernel::new(vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]]).unwrap();
        let mut rng = SeedStream::new(0).rng(0);
        let mut s = CoupledState::new(1usize, 1usize);
        assert!(s.coalesced);
        for _ in 0..50 {
            s = coupled_step(&SynchronousNoise, &k, 0.0, &s, &mut rng).unwrap();
            assert!(s.coalesced && s.x1 == s.x2);
        }
    }

    #[test]
    fn maximal_coupling_equal_means() {
        let m = DVector::from_vec(vec![1.0, -2.0]);
        let mut rng = SeedStream::new(1).rng(0);
        for _ in 0..100 {
            let (a, b, same) = maximal_gaussian_coupling(&m, &m, 0.3, &mut rng).unwrap();
            assert!(same);
            assert_eq!(a, b);
        }
        assert!(maximal_gaussian_coupling(&m, &m, 0.0, &mut rng).is_err());
        assert!(maximal_gaussian_coupling(&m, &m, -1.0, &mut rng).is_err());
    }

    #[test]
    fn maximal_coupling_overlap() {
        let m1 = DVector::from_vec(vec![0.0]);
        let m2 = DVector::from_vec(vec![2.0]);
        let stream = SeedStream::new(2);
        let same = (0..100_000u64)
            .filter(|&i| maximal_gaussian_coupling(&m1, &m2, 1.0, &mut stream.rng(i)).unwrap().2)
            .count();
        // ∫ min of two unit normals at distance 2 = 2Φ(−1).
        let exact = 2.0 * stats::normal_cdf(-1.0);
        assert!((exact - 0.3173).abs() < 1e-4);
        assert!((same as f64 / 1e5 - exact).abs() < 0.004);
    }

    #[test]
    fn maximal_coupling_far_means_rarely_meet() {
        let m1 = DVector::from_vec(vec![0.0]);
        let m2 = DVector::from_vec(vec![40.0]);
        let stream = SeedStream::new(3);
        let same = (0..10_000u64)
            .filter(|&i| maximal_gaussian_coupling(&m1, &m2, 1.0, &mut stream.rng(i)).unwrap().2)
            .count();
        assert_eq!(same, 0);
    }

    #[test]
    fn identical_starts_couple_at_zero() {
        let k = DeterministicKernel::new(StateSpace::Continuous { dim: 1 }, |_, x: &f64| x * 0.5);
        let path = EnvPath::new(0, vec![0.0; 10]);
        let run = run_coupling(&k, &SynchronousNoise, 1.0, 1.0, &path, 10, &mut SeedStream::new(0).rng(0)).unwrap();
        assert_eq!(run.coupling_time, CouplingTime::At(0));
        assert_eq!(run.trajectory.len(), 11);
        assert!(run_coupling(&k, &SynchronousNoise, 1.0, 1.0, &path, 11, &mut SeedStream::new(0).rng(0)).is_err());
    }

    #[test]
    fn deterministic_contraction_never_coalesces() {
        let k = DeterministicKernel::new(StateSpace::Continuous { dim: 1 }, |_, x: &f64| x * 0.5);
        let path = EnvPath::new(0, vec![0.0; 20]);
        let run = run_coupling(&k, &SynchronousNoise, 1.0, 2.0, &path, 20, &mut SeedStream::new(0).rng(0)).unwrap();
        assert_eq!(run.coupling_time, CouplingTime::NotWithin(20));
        let last = run.trajectory.last().unwrap();
        assert!((last.x2 - last.x1 - 0.5f64.powi(20)).abs() < 1e-18);
    }

    #[test]
    fn visit_time_extremes() {
        let k = DeterministicKernel::new(StateSpace::Continuous { dim: 1 }, |_, x: &f64| *x);
        let path = EnvPath::new(0, vec![0.0; 5]);
        let run = run_coupling(&k, &SynchronousNoise, 1.0, 2.0, &path, 5, &mut SeedStream::new(0).rng(0)).unwrap();
        let minor = MinorSpec::new(0.1, |_| -1.0, |_, _: &mut dyn RngCore| 0.0, 0.5, 0.5).unwrap();
        let zero = DriftSpec::<f64>::new(|_| 0.0, |_| 0.5, |_| 1.0);
        assert_eq!(visit_times(&run, &minor, &zero, &path).unwrap(), vec![0, 1, 2, 3, 4]);
        let huge = DriftSpec::<f64>::new(|_| 1e12, |_| 0.5, |_| 1.0);
        assert!(visit_times(&run, &minor, &huge, &path).unwrap().is_empty());
    }
}
