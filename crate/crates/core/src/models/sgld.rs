//! Stochastic gradient Langevin dynamics with a stationary data stream:
//! `θ_{n+1} = θ_n − λ H(θ_n, Y_n) + √λ ξ_{n+1}`.

use nalgebra::DVector;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::env::EnvProcess;
use crate::error::{Error, Result};
use crate::mcre::{choose_epsilon, gamma_bar_curve, DriftSpec, GammaBarReport, MinorSpec, RandomKernel, StateSpace};
use crate::rng::SeedStream;

/// `y ↦ scale · y + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub scale: f64,
    pub offset: f64,
}

impl Affine {
    pub const ZERO: Affine = Affine { scale: 0.0, offset: 0.0 };

    pub fn constant(c: f64) -> Self {
        Self { scale: 0.0, offset: c }
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.scale * y + self.offset
    }

    fn is_zero(&self) -> bool {
        self.scale == 0.0 && self.offset == 0.0
    }

    /// Range over `[lo, hi]`.
    fn range(&self, lo: f64, hi: f64) -> (f64, f64) {
        let (a, b) = (self.eval(lo), self.eval(hi));
        (a.min(b), a.max(b))
    }
}

/// Stochastic gradient `H(θ, y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Gradient {
    /// `H(θ, y) = Δ(y) θ + g(y) 1`.
    Quadratic { delta: Affine, shift: Affine },
    /// Ridge-penalized logistic loss for a label `y` and all-ones feature
    /// direction `u = 1/√d`: `H(θ, y) = −y σ(−y⟨u, θ⟩) u + ρ θ`.
    Logistic { ridge: f64 },
}

impl Gradient {
    pub fn eval(&self, theta: &DVector<f64>, y: f64) -> DVector<f64> {
        match *self {
            Gradient::Quadratic { delta, shift } => theta * delta.eval(y) + DVector::from_element(theta.len(), shift.eval(y)),
            Gradient::Logistic { ridge } => {
                let d = theta.len() as f64;
                let s = theta.sum() / d.sqrt();
                let sig = 1.0 / (1.0 + (y * s).exp());
                theta * ridge - DVector::from_element(theta.len(), y * sig / d.sqrt())
            }
        }
    }
}

/// `θ − λ H(θ, y) + √λ ξ`.
pub fn sgld_step(
    theta: &DVector<f64>,
    y: f64,
    xi: &DVector<f64>,
    lambda: f64,
    h: impl Fn(&DVector<f64>, f64) -> DVector<f64>,
) -> Result<DVector<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::Argument(format!("step size {lambda} must be positive")));
    }
    if theta.len() != xi.len() {
        return Err(Error::Validation(format!("theta has dimension {}, xi has {}", theta.len(), xi.len())));
    }
    let grad = h(theta, y);
    if grad.len() != theta.len() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("gradient H({theta:?}, {y}) = {grad:?} is not a finite vector of matching size")));
    }
    Ok(theta - grad * lambda + xi * lambda.sqrt())
}

/// The SGLD transition kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct SgldKernel {
    pub lambda: f64,
    pub dim: usize,
    pub gradient: Gradient,
}

impl SgldKernel {
    fn mean(&self, y: f64, theta: &DVector<f64>) -> DVector<f64> {
        theta - self.gradient.eval(theta, y) * self.lambda
    }
}

impl RandomKernel for SgldKernel {
    type State = DVector<f64>;

    fn step<R: Rng + ?Sized>(&self, y: f64, theta: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let xi = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        self.mean(y, theta) + xi * self.lambda.sqrt()
    }

    fn space(&self) -> StateSpace {
        StateSpace::Continuous { dim: self.dim }
    }

    fn density(&self, y: f64, theta: &DVector<f64>, next: &DVector<f64>) -> Option<f64> {
        let diff = next - self.mean(y, theta);
        let d = self.dim as f64;
        Some((-diff.norm_squared() / (2.0 * self.lambda)).exp() / (2.0 * std::f64::consts::PI * self.lambda).powf(d / 2.0))
    }

    fn isotropic_gaussian(&self, y: f64, theta: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
        Some((self.mean(y, theta), self.lambda))
    }
}

/// Optional user-declared constants replacing the derived ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SgldOverrides {
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub k3: Option<f64>,
    pub b: Option<f64>,
}

/// Inputs for [`SgldModel::build`].
#[derive(Debug, Clone, PartialEq)]
pub struct SgldParams {
    pub lambda: f64,
    pub dim: usize,
    pub gradient: Gradient,
    pub env: EnvProcess,
    pub overrides: SgldOverrides,
    /// Probe parameters; defaults to rays along the axes and the diagonal.
    pub theta_probes: Option<Vec<DVector<f64>>>,
    /// Probe data values; defaults to the support or a grid over the range.
    pub y_probes: Option<Vec<f64>>,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub theta: f64,
}

/// Assumption constants of the built sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgldConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub b: f64,
    /// Bound on `|Y|`.
    pub m: f64,
    /// Dissipativity rate `Δ(y)`.
    pub delta: Affine,
}

/// Gaussian target `N(mean · 1, I / precision)` of the quadratic family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianTarget {
    pub mean: f64,
    pub precision: f64,
}

#[derive(Clone)]
pub struct SgldModel {
    pub params: SgldParams,
    pub kernel: SgldKernel,
    pub constants: SgldConstants,
    pub gamma_bar: GammaBarReport,
    pub epsilon: f64,
    /// `min γ(y)` over the probes.
    pub gamma_min: f64,
    pub drift: DriftSpec<DVector<f64>>,
    pub minor: MinorSpec<DVector<f64>>,
}

impl std::fmt::Debug for SgldModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SgldModel")
            .field("kernel", &self.kernel)
            .field("constants", &self.constants)
            .field("gamma_bar", &self.gamma_bar.gamma_bar)
            .field("epsilon", &self.epsilon)
            .finish()
    }
}

/// `γ(y) = 1 + 3λ²K₁² − 2λΔ(y)`.
pub fn sgld_gamma(lambda: f64, k1: f64, delta: f64) -> f64 {
    1.0 + 3.0 * lambda * lambda * k1 * k1 - 2.0 * lambda * delta
}

/// `K(y) = λ(d + 2b) + 3λ²K₃² + 3λ²K₂²|y|²`, before the `max(·, 1)` normalization.
pub fn sgld_k_raw(lambda: f64, dim: usize, b: f64, k2: f64, k3: f64, y: f64) -> f64 {
    lambda * (dim as f64 + 2.0 * b) + 3.0 * lambda * lambda * k3 * k3 + 3.0 * lambda * lambda * k2 * k2 * y * y
}

/// `ln(Leb(C)/(2πλ)^{d/2}) − (2 + λK₁)² R / λ − λ(K₂M + K₃)²`, the log of the
/// minorizing mass on the ball `C = {|θ|² <= R}`.
pub fn sgld_log_mass(lambda: f64, dim: usize, c: &SgldConstants, r: f64) -> f64 {
    let d = dim as f64;
    let log_ball = d / 2.0 * std::f64::consts::PI.ln() + d / 2.0 * r.ln() - ln_gamma(d / 2.0 + 1.0);
    let lm = log_ball
        - d / 2.0 * (2.0 * std::f64::consts::PI * lambda).ln()
        - (2.0 + lambda * c.k1).powi(2) * r / lambda
        - lambda * (c.k2 * c.m + c.k3).powi(2);
    lm.min(0.0)
}

/// Uniform draw from the ball of radius `radius` in `dim` dimensions.
pub fn uniform_ball(dim: usize, radius: f64, rng: &mut dyn RngCore) -> DVector<f64> {
    let dir = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let u: f64 = rng.random();
    let norm = dir.norm();
    if norm == 0.0 {
        return dir;
    }
    dir * (radius * u.powf(1.0 / dim as f64) / norm)
}

fn default_theta_probes(dim: usize) -> Vec<DVector<f64>> {
    let mut dirs = Vec::new();
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut v = DVector::zeros(dim);
            v[i] = s;
            dirs.push(v);
        }
    }
    for s in [1.0, -1.0] {
        dirs.push(DVector::from_element(dim, s / (dim as f64).sqrt()));
    }
    let mut out = vec![DVector::zeros(dim)];
    for r in [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0] {
        out.extend(dirs.iter().map(|d| d * r));
    }
    out
}

fn default_y_probes(env: &EnvProcess) -> Option<Vec<f64>> {
    if let Some(s) = env.support() {
        return Some(s);
    }
    let (lo, hi) = env.bounds()?;
    Some((0..=20).map(|i| lo + (hi - lo) * i as f64 / 20.0).collect())
}

fn derive_constants(p: &SgldParams) -> Result<SgldConstants> {
    let (lo, hi) = p.env.bounds().ok_or_else(|| Error::Validation("data stream must be bounded".into()))?;
    let m = lo.abs().max(hi.abs());
    let d = p.dim as f64;
    let derived = match p.gradient {
        Gradient::Quadratic { delta, shift } => {
            let (dmin, dmax) = delta.range(lo, hi);
            let (gmin, gmax) = shift.range(lo, hi);
            let g_sup = gmin.abs().max(gmax.abs());
            let k1 = dmin.abs().max(dmax.abs());
            let (declared, b) = if shift.is_zero() {
                (delta, 0.0)
            } else {
                if !(dmin > 0.0) {
                    return Err(Error::ModelInfeasible(format!("inf Delta = {dmin} must be positive to absorb the shift")));
                }
                (Affine { scale: delta.scale / 2.0, offset: delta.offset / 2.0 }, d * g_sup * g_sup / (2.0 * dmin))
            };
            SgldConstants { k1, k2: shift.scale.abs() * d.sqrt(), k3: shift.offset.abs() * d.sqrt(), b, m, delta: declared }
        }
        Gradient::Logistic { ridge } => {
            if !(ridge > 0.0) {
                return Err(Error::Validation(format!("ridge = {ridge} must be positive")));
            }
            SgldConstants { k1: ridge, k2: 1.0, k3: 0.0, b: m * m / (2.0 * ridge), m, delta: Affine::constant(ridge / 2.0) }
        }
    };
    let o = &p.overrides;
    Ok(SgldConstants {
        k1: o.k1.unwrap_or(derived.k1),
        k2: o.k2.unwrap_or(derived.k2),
        k3: o.k3.unwrap_or(derived.k3),
        b: o.b.unwrap_or(derived.b),
        ..derived
    })
}

impl SgldModel {
    pub fn build(params: SgldParams, stream: &SeedStream) -> Result<Self> {
        if !(params.lambda > 0.0 && params.lambda.is_finite()) {
            return Err(Error::Argument(format!("step size {} must be positive", params.lambda)));
        }
        if params.dim == 0 {
            return Err(Error::Argument("dimension must be at least 1".into()));
        }
        params.env.validate()?;
        let c = derive_constants(&params)?;
        for (name, v) in [("K1", c.k1), ("K2", c.k2), ("K3", c.k3), ("b", c.b)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        let theta_probes = params.theta_probes.clone().unwrap_or_else(|| default_theta_probes(params.dim));
        let y_probes = match &params.y_probes {
            Some(y) => y.clone(),
            None => default_y_probes(&params.env).ok_or_else(|| Error::Validation("no data probes available".into()))?,
        };
        if theta_probes.is_empty() || y_probes.is_empty() {
            return Err(Error::Argument("probe grids must be non-empty".into()));
        }
        if theta_probes.iter().any(|t| t.len() != params.dim) {
            return Err(Error::Validation("probe dimension differs from the model dimension".into()));
        }
        let lambda = params.lambda;
        let mut gamma_min = f64::INFINITY;
        for &y in &y_probes {
            let g = sgld_gamma(lambda, c.k1, c.delta.eval(y));
            if !(g > 0.0) {
                return Err(Error::StepTooLarge { y, gamma: g });
            }
            gamma_min = gamma_min.min(g);
        }
        let mean_delta = c.delta.eval(params.env.mean());
        if !(mean_delta > 0.0) {
            return Err(Error::ModelInfeasible(format!("E[Delta(Y)] = {mean_delta} is not positive")));
        }
        for &y in &y_probes {
            for t in &theta_probes {
                let h = params.gradient.eval(t, y);
                let n2 = t.norm_squared();
                let lhs = h.dot(t);
                let rhs = c.delta.eval(y) * n2 - c.b;
                if lhs < rhs - 1e-12 * (1.0 + rhs.abs()) {
                    return Err(Error::ModelInfeasible(format!(
                        "dissipativity fails at theta = {:?}, y = {y}: <H, theta> = {lhs} < {rhs}",
                        t.as_slice()
                    )));
                }
                let growth = c.k1 * n2.sqrt() + c.k2 * y.abs() + c.k3;
                if h.norm() > growth + 1e-12 * (1.0 + growth) {
                    return Err(Error::ModelInfeasible(format!(
                        "growth bound fails at theta = {:?}, y = {y}: |H| = {} > {growth}",
                        t.as_slice(),
                        h.norm()
                    )));
                }
            }
        }

        let dim = params.dim;
        let (k1, k2, k3, b, delta) = (c.k1, c.k2, c.k3, c.b, c.delta);
        let drift = DriftSpec::new(
            |t: &DVector<f64>| t.norm_squared(),
            move |y| sgld_gamma(lambda, k1, delta.eval(y)),
            move |y| sgld_k_raw(lambda, dim, b, k2, k3, y).max(1.0),
        );
        let gamma_bar = gamma_bar_curve(&params.env, &drift, &params.n_grid, params.reps, &stream.derive("gamma-bar"))?;
        if !gamma_bar.pass {
            return Err(Error::ContractivityViolation { gamma_bar: gamma_bar.ci_high });
        }
        let epsilon = choose_epsilon(gamma_bar.gamma_bar)?;
        let radius = {
            let d = drift.clone();
            move |y: f64| 2.0 * d.k(y) / (epsilon * d.gamma(y))
        };
        let r1 = radius.clone();
        let minor = MinorSpec::new(
            epsilon,
            move |y| sgld_log_mass(lambda, dim, &c, radius(y)),
            move |y, rng: &mut dyn RngCore| uniform_ball(dim, r1(y).sqrt(), rng),
            gamma_bar.gamma_bar,
            params.theta,
        )?;
        Ok(Self {
            kernel: SgldKernel { lambda, dim, gradient: params.gradient.clone() },
            params,
            constants: c,
            gamma_bar,
            epsilon,
            gamma_min,
            drift,
            minor,
        })
    }

    /// Target of the quadratic family, from `h(θ) = E H(θ, Y_0)`.
    pub fn target(&self) -> Option<GaussianTarget> {
        match self.params.gradient {
            Gradient::Quadratic { delta, shift } => {
                let ey = self.params.env.mean();
                let precision = delta.eval(ey);
                Some(GaussianTarget { mean: -shift.eval(ey) / precision, precision })
            }
            Gradient::Logistic { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Marginal;

    fn two_point() -> EnvProcess {
        EnvProcess::Iid(Marginal::Discrete { values: vec![0.4, 0.6], probs: vec![0.5, 0.5] })
    }

    fn params(lambda: f64) -> SgldParams {
        SgldParams {
            lambda,
            dim: 1,
            gradient: Gradient::Quadratic { delta: Affine { scale: 1.0, offset: 0.0 }, shift: Affine::ZERO },
            env: two_point(),
            overrides: SgldOverrides::default(),
            theta_probes: None,
            y_probes: None,
            n_grid: vec![10, 20, 40],
            reps: 2000,
            theta: 0.5,
        }
    }

    #[test]
    fn step_examples() {
        let zero = |t: &DVector<f64>, _| DVector::zeros(t.len());
        let out = sgld_step(&DVector::zeros(2), 0.0, &DVector::from_vec(vec![1.0, 0.0]), 0.01, zero).unwrap();
        assert!((out[0] - 0.1).abs() < 1e-15 && out[1] == 0.0);
        let id = |t: &DVector<f64>, _| t.clone();
        let out = sgld_step(&DVector::from_vec(vec![1.0]), 0.0, &DVector::zeros(1), 0.1, id).unwrap();
        assert!((out[0] - 0.9).abs() < 1e-15);
        let quad = Gradient::Quadratic { delta: Affine::constant(0.5), shift: Affine::ZERO };
        let out = sgld_step(&DVector::from_vec(vec![2.0]), 0.0, &DVector::zeros(1), 0.1, |t, y| quad.eval(t, y)).unwrap();
        assert!((out[0] - 1.9).abs() < 1e-15);
        let bad = |t: &DVector<f64>, _| DVector::from_element(t.len(), f64::NAN);
        assert!(matches!(sgld_step(&DVector::zeros(1), 0.0, &DVector::zeros(1), 0.1, bad), Err(Error::Numeric(_))));
    }

    #[test]
    fn gamma_and_k_formulas() {
        assert!((sgld_gamma(0.1, 1.0, 0.5) - 0.93).abs() < 1e-15);
        assert!((sgld_k_raw(0.01, 1, 0.0, 0.0, 0.0, 3.0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn quadratic_instance_builds() {
        let m = SgldModel::build(params(0.01), &SeedStream::new(5)).unwrap();
        assert_eq!(m.constants.k1, 0.6);
        assert_eq!(m.constants.b, 0.0);
        assert_eq!(m.drift.k(0.4), 1.0);
        let expected = 0.5 * (sgld_gamma(0.01, 0.6, 0.4) + sgld_gamma(0.01, 0.6, 0.6));
        assert!((m.gamma_bar.gamma_bar - expected).abs() < 2e-4, "{}", m.gamma_bar.gamma_bar);
        let t = m.target().unwrap();
        assert_eq!(t.mean, 0.0);
        assert!((t.precision - 0.5).abs() < 1e-15);
        let a = m.minor.alpha(0.4).unwrap();
        assert!(a <= 1.0);
        assert!(m.minor.log_mass(0.4) < 0.0 && m.minor.log_mass(0.4).is_finite());
    }

    #[test]
    fn large_step_rejected() {
        let mut p = params(2.0);
        p.overrides.k1 = Some(0.25);
        match SgldModel::build(p, &SeedStream::new(5)).unwrap_err() {
            Error::StepTooLarge { y, gamma } => {
                assert_eq!(y, 0.6);
                assert!((gamma + 0.65).abs() < 1e-12);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn understated_growth_constant_rejected() {
        let mut p = params(0.01);
        p.overrides.k1 = Some(0.3);
        assert!(matches!(SgldModel::build(p, &SeedStream::new(5)), Err(Error::ModelInfeasible(_))));
    }

    #[test]
    fn logistic_instance_builds() {
        let p = SgldParams {
            gradient: Gradient::Logistic { ridge: 0.5 },
            env: EnvProcess::Iid(Marginal::Discrete { values: vec![-1.0, 1.0], probs: vec![0.5, 0.5] }),
            dim: 2,
            ..params(0.01)
        };
        let m = SgldModel::build(p, &SeedStream::new(5)).unwrap();
        assert!(m.target().is_none());
        assert_eq!(m.constants.b, 1.0);
    }

    #[test]
    fn ball_draws_inside() {
        let mut rng = SeedStream::new(1).rng(0);
        for _ in 0..100 {
            assert!(uniform_ball(3, 2.0, &mut rng).norm() <= 2.0);
        }
    }
}
