//! Laws, total-variation curves, rate fits, law-of-large-numbers experiments
//! and the exact finite-state oracle.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::env::{sample_path, EnvProcess};
use crate::error::{Error, Result};
use crate::mcre::{RandomKernel, StateSpace};
use crate::report::{fmt_f64, CsvRecord};
use crate::rng::SeedStream;
use crate::stats;

pub mod law;
pub mod lln;
pub mod oracle;
pub mod rate;

pub use law::{tv_hist, tv_laws, tv_weights, Binning, EmpiricalLaw, Histogram};
pub use lln::{lln_experiment, surrogate_reference, LlnPoint, LlnReport, Reference};
pub use oracle::{oracle_exact, DiscreteOracle, OracleExact};
pub use rate::{rate_fit, DecayModel, ModelFit, RateFit, RateFitRow};

/// States at each time in `n_grid` (outer index) for `reps` independent
/// runs from `x0` (inner index), each on its own environment path.
pub fn simulate_grid<K: RandomKernel>(
    kernel: &K,
    env: &EnvProcess,
    x0: &K::State,
    n_grid: &[usize],
    reps: usize,
    stream: &SeedStream,
) -> Result<Vec<Vec<K::State>>> {
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("time grid must be strictly increasing".into()));
    }
    let n_max = n_grid.last().copied().unwrap_or(0);
    let env_stream = stream.derive("env");
    let chain_stream = stream.derive("chain");
    let per_rep: Vec<Vec<K::State>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut out = Vec::with_capacity(n_grid.len());
            let mut x = x0.clone();
            let mut next = 0;
            while next < n_grid.len() && n_grid[next] == 0 {
                out.push(x.clone());
                next += 1;
            }
            if n_max > 0 {
                let path = sample_path(env, 0, n_max as i64 - 1, &mut env_stream.rng(r))?;
                let mut rng = chain_stream.rng(r);
                for (t, &y) in path.values().iter().enumerate() {
                    x = kernel.step(y, &x, &mut rng);
                    if n_grid[next] == t + 1 {
                        out.push(x.clone());
                        next += 1;
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok((0..n_grid.len()).map(|i| per_rep.iter().map(|r| r[i].clone()).collect()).collect())
}

/// Samples of `X_n` from `x0` across `reps` replications.
pub fn empirical_law<K: RandomKernel>(
    kernel: &K,
    env: &EnvProcess,
    x0: &K::State,
    n: usize,
    reps: usize,
    stream: &SeedStream,
) -> Result<Vec<K::State>> {
    if matches!(kernel.space(), StateSpace::Continuous { .. }) {
        crate::mcre::verify_reps(reps)?;
    }
    Ok(simulate_grid(kernel, env, x0, &[n], reps, stream)?.pop().expect("one grid point"))
}

/// One point of a TV curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvPoint {
    pub n: usize,
    pub estimate: f64,
    /// Bootstrap interval with the resampling bias removed.
    pub ci_low: f64,
    pub ci_high: f64,
    pub exact: Option<f64>,
    /// Width of the shared histogram partition for binned estimates.
    pub bin_width: Option<f64>,
}

impl CsvRecord for TvPoint {
    const HEADER: &'static [&'static str] = &["n", "estimate", "ci_low", "ci_high", "exact_if_available", "bin_width"];

    fn fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        vec![self.n.to_string(), fmt_f64(self.estimate), fmt_f64(self.ci_low), fmt_f64(self.ci_high), opt(self.exact), opt(self.bin_width)]
    }
}

/// What a discrete TV curve compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TvTarget {
    /// The exact invariant X-marginal `μ*`.
    Stationary,
    /// The law of the chain from another start.
    Start(usize),
}

fn weights(states: &[usize], idx: &[usize], size: usize) -> Vec<f64> {
    let mut w = vec![0.0; size];
    for &i in idx {
        w[states[i]] += 1.0;
    }
    let n = idx.len() as f64;
    w.iter_mut().for_each(|v| *v /= n);
    w
}

/// Empirical TV curve on the oracle, with exact values alongside.
pub fn tv_curve_discrete(
    oracle: &DiscreteOracle,
    x0: usize,
    target: TvTarget,
    n_grid: &[usize],
    reps: usize,
    stream: &SeedStream,
) -> Result<Vec<TvPoint>> {
    if reps == 0 {
        return Err(Error::Argument("reps must be positive".into()));
    }
    let env = oracle.env_process();
    let size = oracle.size();
    let n_max = n_grid.last().copied().unwrap_or(0);
    let laws_a = oracle.laws(x0, n_max)?;
    let sim_a = simulate_grid(oracle.kernel(), &env, &x0, n_grid, reps, &stream.derive("a"))?;
    let (laws_b, sim_b) = match target {
        TvTarget::Stationary => (None, None),
        TvTarget::Start(x1) => {
            (Some(oracle.laws(x1, n_max)?), Some(simulate_grid(oracle.kernel(), &env, &x1, n_grid, reps, &stream.derive("b"))?))
        }
    };
    let all: Vec<usize> = (0..reps).collect();
    n_grid
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let a = &sim_a[i];
            let b = sim_b.as_ref().map(|s| &s[i]);
            let distance = |idx: &[usize]| -> f64 {
                let wa = weights(a, idx, size);
                let wb = match b {
                    Some(b) => weights(b, idx, size),
                    None => oracle.mu_star().to_vec(),
                };
                tv_weights(&wa, &wb).expect("same size")
            };
            let exact = match &laws_b {
                Some(lb) => tv_weights(&laws_a[n], &lb[n])?,
                None => tv_weights(&laws_a[n], oracle.mu_star())?,
            };
            let estimate = distance(&all);
            let boot = stats::bootstrap(reps, stats::BOOTSTRAP_RESAMPLES, 0.95, &stream.derive(&format!("boot-{i}")), distance)
                .bias_corrected(estimate, 0.0, 2.0);
            Ok(TvPoint { n, estimate, ci_low: boot.ci_low, ci_high: boot.ci_high, exact: Some(exact), bin_width: None })
        })
        .collect()
}

/// Binned TV curve between the laws from two starts of a scalar chain.
pub fn tv_curve_scalar<K: RandomKernel<State = f64>>(
    kernel: &K,
    env: &EnvProcess,
    x0: f64,
    x1: f64,
    n_grid: &[usize],
    reps: usize,
    stream: &SeedStream,
) -> Result<Vec<TvPoint>> {
    crate::mcre::verify_reps(reps)?;
    let sim_a = simulate_grid(kernel, env, &x0, n_grid, reps, &stream.derive("a"))?;
    let sim_b = simulate_grid(kernel, env, &x1, n_grid, reps, &stream.derive("b"))?;
    binned_curve(n_grid, &sim_a, &sim_b, stream)
}

fn binned_curve(n_grid: &[usize], sim_a: &[Vec<f64>], sim_b: &[Vec<f64>], stream: &SeedStream) -> Result<Vec<TvPoint>> {
    n_grid
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let (a, b) = (&sim_a[i], &sim_b[i]);
            let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
            let binning = Binning::freedman_diaconis(&pooled)?;
            let distance = |idx: &[usize]| -> f64 {
                let ra: Vec<f64> = idx.iter().map(|&j| a[j]).collect();
                let rb: Vec<f64> = idx.iter().map(|&j| b[j]).collect();
                let ha = Histogram::from_samples(&ra, binning).expect("non-empty");
                let hb = Histogram::from_samples(&rb, binning).expect("non-empty");
                tv_hist(&ha, &hb).expect("shared binning")
            };
            let all: Vec<usize> = (0..a.len()).collect();
            let estimate = distance(&all);
            let boot = stats::bootstrap(a.len(), stats::BOOTSTRAP_RESAMPLES, 0.95, &stream.derive(&format!("boot-{i}")), distance)
                .bias_corrected(estimate, 0.0, 2.0);
            Ok(TvPoint {
                n,
                estimate,
                ci_low: boot.ci_low,
                ci_high: boot.ci_high,
                exact: None,
                bin_width: Some(binning.width),
            })
        })
        .collect()
}

/// Binned TV curve for a vector-valued chain; only one-dimensional states
/// are supported.
pub fn tv_curve_vector<K: RandomKernel<State = DVector<f64>>>(
    kernel: &K,
    env: &EnvProcess,
    x0: &DVector<f64>,
    x1: &DVector<f64>,
    n_grid: &[usize],
    reps: usize,
    stream: &SeedStream,
) -> Result<Vec<TvPoint>> {
    if x0.len() != 1 || x1.len() != 1 {
        return Err(Error::Unsupported(format!(
            "sample-based TV in dimension {}; use the coupling bound instead",
            x0.len().max(x1.len())
        )));
    }
    crate::mcre::verify_reps(reps)?;
    let flatten = |s: Vec<Vec<DVector<f64>>>| -> Vec<Vec<f64>> { s.into_iter().map(|v| v.into_iter().map(|x| x[0]).collect()).collect() };
    let sim_a = flatten(simulate_grid(kernel, env, x0, n_grid, reps, &stream.derive("a"))?);
    let sim_b = flatten(simulate_grid(kernel, env, x1, n_grid, reps, &stream.derive("b"))?);
    binned_curve(n_grid, &sim_a, &sim_b, stream)
}
