//! Linear systems with random coefficients:
//! `X_{t+1} = A(Y_t) X_t + B(Y_t) ε_{t+1}` with Gaussian innovations.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::env::{sample_path, EnvPath, EnvProcess};
use crate::error::{Error, Result};
use crate::mcre::{block_gamma_bar_curve, multistep_wrap, BlockDrift, GammaBarReport, MultistepKernel, RandomKernel, StateSpace};
use crate::rng::SeedStream;
use crate::stats;

/// Largest singular value.
pub fn op_norm(m: &DMatrix<f64>) -> Result<f64> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("matrix has non-finite entries: {m}")));
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    Ok(m.singular_values().max())
}

/// `R(φ) · diag(s1, s2)`.
pub fn rotation_scaling(angle_deg: f64, s1: f64, s2: f64) -> DMatrix<f64> {
    let (s, c) = angle_deg.to_radians().sin_cos();
    DMatrix::from_row_slice(2, 2, &[c * s1, -s * s2, s * s1, c * s2])
}

/// Coefficient tables indexed by the environment value, which must be a
/// label `0, 1, ...`; a single entry applies to every value.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearKernel {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub noise_sd: f64,
}

fn table_index(len: usize, y: f64) -> Option<usize> {
    if len == 1 {
        return Some(0);
    }
    let r = y.round();
    ((y - r).abs() < 1e-9 && r >= 0.0 && (r as usize) < len).then_some(r as usize)
}

impl LinearKernel {
    pub fn dim(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn a_at(&self, y: f64) -> Result<&DMatrix<f64>> {
        table_index(self.a.len(), y).map(|i| &self.a[i]).ok_or_else(|| Error::Range(format!("no A matrix for environment value {y}")))
    }

    pub fn b_at(&self, y: f64) -> Result<&DMatrix<f64>> {
        table_index(self.b.len(), y).map(|i| &self.b[i]).ok_or_else(|| Error::Range(format!("no B matrix for environment value {y}")))
    }

    /// `A(y_p) ⋯ A(y_1)`.
    pub fn product(&self, block: &[f64]) -> Result<DMatrix<f64>> {
        let mut acc = DMatrix::identity(self.dim(), self.dim());
        for &y in block {
            acc = self.a_at(y)? * acc;
        }
        Ok(acc)
    }

    fn noise<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.dim(), |_, _| self.noise_sd * rng.sample::<f64, _>(StandardNormal))
    }
}

/// `A(y) x + B(y) e`.
pub fn linear_step(x: &DVector<f64>, y: f64, e: &DVector<f64>, kernel: &LinearKernel) -> Result<DVector<f64>> {
    let a = kernel.a_at(y)?;
    let b = kernel.b_at(y)?;
    if a.ncols() != x.len() || b.ncols() != e.len() || a.nrows() != b.nrows() {
        return Err(Error::Validation(format!(
            "dimension mismatch: A is {}x{}, x has {}, B is {}x{}, e has {}",
            a.nrows(),
            a.ncols(),
            x.len(),
            b.nrows(),
            b.ncols(),
            e.len()
        )));
    }
    Ok(a * x + b * e)
}

impl RandomKernel for LinearKernel {
    type State = DVector<f64>;

    fn step<R: Rng + ?Sized>(&self, y: f64, x: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let e = self.noise(rng);
        let a = self.a_at(y).expect("environment values checked at build");
        let b = self.b_at(y).expect("environment values checked at build");
        a * x + b * e
    }

    fn space(&self) -> StateSpace {
        StateSpace::Continuous { dim: self.dim() }
    }
}

/// `E|ε|` for `ε ~ N(0, σ² I_d)`.
pub fn gaussian_mean_norm(dim: usize, sd: f64) -> f64 {
    let d = dim as f64;
    sd * std::f64::consts::SQRT_2 * (ln_gamma((d + 1.0) / 2.0) - ln_gamma(d / 2.0)).exp()
}

/// Inputs for [`LinearModel::build`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub noise_sd: f64,
    pub env: EnvProcess,
    pub p: usize,
    pub n_grid: Vec<usize>,
    pub reps: usize,
}

/// Monte-Carlo estimate of `E ln |||A(Y_p) ⋯ A(Y_1)|||` with a 95% CI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone)]
pub struct LinearModel {
    pub params: LinearParams,
    pub kernel: LinearKernel,
    pub multistep: MultistepKernel<LinearKernel>,
    /// Common bound `M >= 1` on `|||A(·)|||` and `|||B(·)|||`.
    pub m: f64,
    pub mean_noise_norm: f64,
    /// `p M^p E|ε₀|` before the `max(·, 1)` normalization.
    pub k_raw: f64,
    pub stability: StabilityEstimate,
    pub gamma_bar: GammaBarReport,
}

impl std::fmt::Debug for LinearModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearModel")
            .field("kernel", &self.kernel)
            .field("m", &self.m)
            .field("k_raw", &self.k_raw)
            .field("stability", &self.stability)
            .finish()
    }
}

/// Estimates `E ln |||A(Y_p) ⋯ A(Y_1)|||` over stationary blocks.
pub fn stability_estimate(kernel: &LinearKernel, env: &EnvProcess, p: usize, reps: usize, stream: &SeedStream) -> Result<StabilityEstimate> {
    crate::mcre::verify_reps(reps)?;
    let logs: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let path = sample_path(env, 1, p as i64, &mut stream.rng(r))?;
            Ok(op_norm(&kernel.product(path.values())?)?.ln())
        })
        .collect::<Result<_>>()?;
    let mean = stats::mean(&logs);
    let se = stats::std_error(&logs);
    let z = stats::normal_quantile(0.975);
    Ok(StabilityEstimate { mean, std_error: se, ci_low: mean - z * se, ci_high: mean + z * se })
}

impl LinearModel {
    pub fn build(params: LinearParams, stream: &SeedStream) -> Result<Self> {
        if params.p == 0 {
            return Err(Error::Argument("block length p must be at least 1".into()));
        }
        if params.a.is_empty() || params.b.is_empty() {
            return Err(Error::Validation("coefficient tables must be non-empty".into()));
        }
        if !(params.noise_sd > 0.0 && params.noise_sd.is_finite()) {
            return Err(Error::Validation(format!("noise sd {} must be positive", params.noise_sd)));
        }
        params.env.validate()?;
        let d = params.a[0].nrows();
        for m in params.a.iter().chain(&params.b) {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Validation(format!("coefficient matrices must all be {d}x{d}, found {}x{}", m.nrows(), m.ncols())));
            }
        }
        let kernel = LinearKernel { a: params.a.clone(), b: params.b.clone(), noise_sd: params.noise_sd };
        let probes = match params.env.support() {
            Some(s) => s,
            None if params.a.len() == 1 && params.b.len() == 1 => vec![0.0],
            None => return Err(Error::Validation("labelled coefficient tables need a finite-valued environment".into())),
        };
        let mut m = 1.0f64;
        for &y in &probes {
            for mat in [kernel.a_at(y)?, kernel.b_at(y)?] {
                m = m.max(op_norm(mat)?);
                let inv = mat
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::ModelInfeasible(format!("coefficient matrix at y = {y} is singular")))?;
                let inv_norm = op_norm(&inv)?;
                if !inv_norm.is_finite() {
                    return Err(Error::ModelInfeasible(format!("inverse norm at y = {y} is not finite")));
                }
            }
        }
        let stability = stability_estimate(&kernel, &params.env, params.p, params.reps, &stream.derive("stability"))?;
        if !(stability.ci_high < 0.0) {
            return Err(if stability.ci_low > 0.0 {
                Error::ModelInfeasible(format!("random-coefficient stability fails: E ln |||A-product||| estimated at {} > 0", stability.mean))
            } else {
                Error::InconclusiveStability { ci_low: stability.ci_low, ci_high: stability.ci_high }
            });
        }
        let p = params.p;
        let mean_noise_norm = gaussian_mean_norm(d, params.noise_sd);
        let k_raw = p as f64 * m.powi(p as i32) * mean_noise_norm;
        let k = k_raw.max(1.0);
        let gk = kernel.clone();
        let block_gamma = Arc::new(move |block: &[f64]| op_norm(&gk.product(block).expect("labels checked")).expect("finite"));
        let gamma_bar = block_gamma_bar_curve(&params.env, p, &*block_gamma, k, &params.n_grid, params.reps, &stream.derive("gamma-bar"))?;
        if !gamma_bar.pass {
            return Err(Error::ContractivityViolation { gamma_bar: gamma_bar.ci_high });
        }
        let drift = BlockDrift { gamma: block_gamma, k, one_step_k: m.max(m * mean_noise_norm) };
        let multistep = multistep_wrap(kernel.clone(), p, drift)?;
        Ok(Self { params, kernel, multistep, m, mean_noise_norm, k_raw, stability, gamma_bar })
    }
}

/// Runs two copies from `x` and `x2` on the same innovations and returns
/// `X_t − X'_t` for `t = 0..=path.len()`.
pub fn shared_noise_differences<R: Rng + ?Sized>(
    kernel: &LinearKernel,
    x: &DVector<f64>,
    x2: &DVector<f64>,
    path: &EnvPath,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let mut a = x.clone();
    let mut b = x2.clone();
    let mut out = vec![&a - &b];
    for &y in path.values() {
        let e = kernel.noise(rng);
        a = linear_step(&a, y, &e, kernel)?;
        b = linear_step(&b, y, &e, kernel)?;
        out.push(&a - &b);
    }
    Ok(out)
}
