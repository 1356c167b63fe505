//! Parametric kernels `Q(y, x, ·)` with their drift and minorization data.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, RngCore};

use crate::env::sample_index;
use crate::error::{Error, Result};

mod multistep;
mod verify;

pub use multistep::{block_drift_check, multistep_wrap, BlockDrift, BlockGamma, MultistepKernel};
pub(crate) use verify::check_reps as verify_reps;
pub use verify::{
    block_gamma_bar_curve, drift_check, gamma_bar_curve, smallness_curve, CurvePoint, DriftReport, GammaBarReport,
    SmallnessReport, SmallnessRule, VerifierRow, DEFAULT_DRIFT_TOLERANCE_SE, MIN_REPS,
};

/// Shape of a kernel's state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSpace {
    Continuous { dim: usize },
    Discrete { size: usize },
}

/// A random kernel: for each environment value `y` and state `x`, a law
/// `Q(y, x, ·)` we can sample from.
pub trait RandomKernel: Send + Sync {
    type State: Clone + PartialEq + Debug + Send + Sync;

    /// Draws `x' ~ Q(y, x, ·)`.
    fn step<R: Rng + ?Sized>(&self, y: f64, x: &Self::State, rng: &mut R) -> Self::State;

    fn space(&self) -> StateSpace;

    /// Transition density (or mass) of `next`, where the model has one.
    fn density(&self, _y: f64, _x: &Self::State, _next: &Self::State) -> Option<f64> {
        None
    }

    /// `(mean, variance)` when `Q(y, x, ·)` is `Normal(mean, variance · I)`.
    fn isotropic_gaussian(&self, _y: f64, _x: &Self::State) -> Option<(DVector<f64>, f64)> {
        None
    }
}

/// Draws one transition.
pub fn kernel_step<K: RandomKernel, R: Rng + ?Sized>(kernel: &K, y: f64, x: &K::State, rng: &mut R) -> K::State {
    kernel.step(y, x, rng)
}

/// Kernel given by a deterministic map `x' = f(y, x)`.
pub struct DeterministicKernel<S, F> {
    map: F,
    space: StateSpace,
    _state: std::marker::PhantomData<fn() -> S>,
}

impl<S, F> DeterministicKernel<S, F>
where
    F: Fn(f64, &S) -> S + Send + Sync,
{
    pub fn new(space: StateSpace, map: F) -> Self {
        Self { map, space, _state: std::marker::PhantomData }
    }
}

impl<S, F> RandomKernel for DeterministicKernel<S, F>
where
    S: Clone + PartialEq + Debug + Send + Sync,
    F: Fn(f64, &S) -> S + Send + Sync,
{
    type State = S;

    fn step<R: Rng + ?Sized>(&self, y: f64, x: &S, _rng: &mut R) -> S {
        (self.map)(y, x)
    }

    fn space(&self) -> StateSpace {
        self.space
    }
}

/// Finite-state kernel with one stochastic matrix per environment label.
/// Environment values are interpreted as labels `0, 1, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteKernel {
    matrices: Vec<Vec<Vec<f64>>>,
}

impl FiniteKernel {
    pub fn new(matrices: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let size = matrices.first().map(Vec::len).ok_or_else(|| Error::Validation("no transition matrices".into()))?;
        for m in &matrices {
            crate::env::validate_stochastic(m)?;
            if m.len() != size {
                return Err(Error::Validation("transition matrices differ in size".into()));
            }
        }
        Ok(Self { matrices })
    }

    pub fn size(&self) -> usize {
        self.matrices[0].len()
    }

    pub fn labels(&self) -> usize {
        self.matrices.len()
    }

    /// The matrix used under environment value `y`.
    pub fn matrix(&self, y: f64) -> &[Vec<f64>] {
        &self.matrices[label(y, self.matrices.len())]
    }

    pub fn matrices(&self) -> &[Vec<Vec<f64>>] {
        &self.matrices
    }
}

pub(crate) fn label(y: f64, count: usize) -> usize {
    let l = y.round();
    assert!(l >= 0.0 && (l as usize) < count && (y - l).abs() < 1e-9, "environment value {y} is not a label below {count}");
    l as usize
}

impl RandomKernel for FiniteKernel {
    type State = usize;

    fn step<R: Rng + ?Sized>(&self, y: f64, x: &usize, rng: &mut R) -> usize {
        sample_index(&self.matrix(y)[*x], rng.random())
    }

    fn space(&self) -> StateSpace {
        StateSpace::Discrete { size: self.size() }
    }

    fn density(&self, y: f64, x: &usize, next: &usize) -> Option<f64> {
        Some(self.matrix(y)[*x][*next])
    }
}

pub type StateFn<S> = Arc<dyn Fn(&S) -> f64 + Send + Sync>;
pub type EnvFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type KappaSampler<S> = Arc<dyn Fn(f64, &mut dyn RngCore) -> S + Send + Sync>;

/// Drift data `[Q(y)V](x) <= γ(y) V(x) + K(y)`.
pub struct DriftSpec<S> {
    lyapunov: StateFn<S>,
    gamma: EnvFn,
    k: EnvFn,
}

impl<S> Clone for DriftSpec<S> {
    fn clone(&self) -> Self {
        Self { lyapunov: self.lyapunov.clone(), gamma: self.gamma.clone(), k: self.k.clone() }
    }
}

impl<S> DriftSpec<S> {
    pub fn new(
        lyapunov: impl Fn(&S) -> f64 + Send + Sync + 'static,
        gamma: impl Fn(f64) -> f64 + Send + Sync + 'static,
        k: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { lyapunov: Arc::new(lyapunov), gamma: Arc::new(gamma), k: Arc::new(k) }
    }

    pub fn v(&self, x: &S) -> f64 {
        (self.lyapunov)(x)
    }

    pub fn gamma(&self, y: f64) -> f64 {
        (self.gamma)(y)
    }

    pub fn k(&self, y: f64) -> f64 {
        (self.k)(y)
    }

    /// Checks `γ(y) > 0` and `K(y) >= 1` on the given environment values.
    pub fn validate_on(&self, ys: &[f64]) -> Result<()> {
        for &y in ys {
            let g = self.gamma(y);
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::Validation(format!("gamma({y}) = {g} is not positive")));
            }
            let k = self.k(y);
            if !(k >= 1.0) || !k.is_finite() {
                return Err(Error::Validation(format!("K({y}) = {k} is below 1")));
            }
        }
        Ok(())
    }
}

/// `R(y) = 2 K(y) / (ε γ(y))`, the radius of the small set `V⁻¹([0, R(y)])`.
pub fn small_set_radius<S>(drift: &DriftSpec<S>, epsilon: f64, y: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Validation(format!("epsilon = {epsilon} must be positive")));
    }
    let g = drift.gamma(y);
    if !(g > 0.0) {
        return Err(Error::Validation(format!("gamma({y}) = {g} must be positive")));
    }
    Ok(2.0 * drift.k(y) / (epsilon * g))
}

/// Midpoint choice `ε = (1/√γ̄ − 1) / 2` inside `(0, 1/√γ̄ − 1)`.
pub fn choose_epsilon(gamma_bar: f64) -> Result<f64> {
    if !(gamma_bar > 0.0) {
        return Err(Error::Argument(format!("gamma_bar = {gamma_bar} must be positive")));
    }
    if gamma_bar >= 1.0 {
        return Err(Error::ContractivityViolation { gamma_bar });
    }
    Ok((1.0 / gamma_bar.sqrt() - 1.0) / 2.0)
}

/// Minorization data: on the small set, `Q(y, x, ·) >= (1 − α(y)) κ(y, ·)`.
///
/// The minorizing mass `1 − α(y)` is stored as its logarithm. Theoretical
/// constants are often far below `f64::EPSILON` (α rounds to 1) while still
/// being strictly positive.
pub struct MinorSpec<S> {
    epsilon: f64,
    log_mass: EnvFn,
    kappa: KappaSampler<S>,
    gamma_bar: f64,
    theta: f64,
}

impl<S> Clone for MinorSpec<S> {
    fn clone(&self) -> Self {
        Self {
            epsilon: self.epsilon,
            log_mass: self.log_mass.clone(),
            kappa: self.kappa.clone(),
            gamma_bar: self.gamma_bar,
            theta: self.theta,
        }
    }
}

impl<S> MinorSpec<S> {
    pub fn new(
        epsilon: f64,
        log_mass: impl Fn(f64) -> f64 + Send + Sync + 'static,
        kappa: impl Fn(f64, &mut dyn RngCore) -> S + Send + Sync + 'static,
        gamma_bar: f64,
        theta: f64,
    ) -> Result<Self> {
        if !(gamma_bar > 0.0 && gamma_bar < 1.0) {
            return Err(Error::ContractivityViolation { gamma_bar });
        }
        let upper = 1.0 / gamma_bar.sqrt() - 1.0;
        if !(epsilon > 0.0 && epsilon < upper) {
            return Err(Error::Validation(format!("epsilon = {epsilon} outside (0, {upper})")));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::Validation(format!("smallness exponent theta = {theta} outside (0, 1)")));
        }
        Ok(Self { epsilon, log_mass: Arc::new(log_mass), kappa: Arc::new(kappa), gamma_bar, theta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn gamma_bar(&self) -> f64 {
        self.gamma_bar
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `ln(1 − α(y))`.
    pub fn log_mass(&self, y: f64) -> f64 {
        (self.log_mass)(y)
    }

    pub fn log_mass_fn(&self) -> EnvFn {
        self.log_mass.clone()
    }

    /// `α(y)`; validated to lie in `[0, 1)` through its log-mass.
    pub fn alpha(&self, y: f64) -> Result<f64> {
        let lm = self.log_mass(y);
        if !(lm <= 0.0) || lm == f64::NEG_INFINITY {
            return Err(Error::Validation(format!("alpha({y}) outside [0, 1): ln(1 - alpha) = {lm}")));
        }
        Ok(-lm.exp_m1())
    }

    pub fn sample_kappa(&self, y: f64, rng: &mut dyn RngCore) -> S {
        (self.kappa)(y, rng)
    }

    pub fn radius(&self, drift: &DriftSpec<S>, y: f64) -> Result<f64> {
        small_set_radius(drift, self.epsilon, y)
    }

    /// Asserts `min V(probe) <= R(y)` for each environment value.
    pub fn check_small_sets(&self, drift: &DriftSpec<S>, probes: &[S], ys: &[f64]) -> Result<()> {
        let min_v = probes.iter().map(|x| drift.v(x)).fold(f64::INFINITY, f64::min);
        for &y in ys {
            let r = self.radius(drift, y)?;
            if !(min_v <= r) {
                return Err(Error::Validation(format!("small set at y = {y} is empty on the probes (min V = {min_v} > R = {r})")));
            }
        }
        Ok(())
    }
}
