//! L^p errors of ergodic averages `(1/N) Σ_{t<N} Φ(X_t)`.

use rayon::prelude::*;

use crate::env::{sample_path, EnvProcess};
use crate::error::{Error, Result};
use crate::mcre::RandomKernel;
use crate::report::{fmt_f64, CsvRecord};
use crate::rng::SeedStream;
use crate::stats;

/// The value `∫Φ dμ*` errors are measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Exact(f64),
    /// Average over one long trajectory after discarding `burn_in` steps.
    Surrogate { value: f64, steps: usize, burn_in: usize },
}

impl Reference {
    pub fn value(&self) -> f64 {
        match *self {
            Reference::Exact(v) | Reference::Surrogate { value: v, .. } => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlnPoint {
    pub n: usize,
    pub p: f64,
    pub error: f64,
    /// Standard error of the mean of `|avg − ref|^p`, before the `1/p` power.
    pub moment_std_error: f64,
}

impl CsvRecord for LlnPoint {
    const HEADER: &'static [&'static str] = &["N", "p", "error"];

    fn fields(&self) -> Vec<String> {
        vec![self.n.to_string(), fmt_f64(self.p), fmt_f64(self.error)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlnReport {
    pub points: Vec<LlnPoint>,
    pub reference: Reference,
    /// Errors are non-increasing along the grid.
    pub decreasing: bool,
}

fn checked_phi<S: std::fmt::Debug>(phi: &(dyn Fn(&S) -> f64 + Sync), bound: f64, x: &S) -> Result<f64> {
    let v = phi(x);
    if !(v.abs() <= bound) {
        return Err(Error::Validation(format!("|Phi({x:?})| = {} exceeds the declared bound {bound}", v.abs())));
    }
    Ok(v)
}

/// Long-run average of `Φ` from `x0` over `steps` steps, dropping the first 10%.
pub fn surrogate_reference<K: RandomKernel>(
    kernel: &K,
    env: &EnvProcess,
    x0: &K::State,
    phi: &(dyn Fn(&K::State) -> f64 + Sync),
    bound: f64,
    steps: usize,
    stream: &SeedStream,
) -> Result<Reference> {
    if steps < 10 {
        return Err(Error::Argument("surrogate needs at least 10 steps".into()));
    }
    let burn_in = steps / 10;
    let path = sample_path(env, 0, steps as i64 - 1, &mut stream.derive("env").rng(0))?;
    let mut rng = stream.derive("chain").rng(0);
    let mut x = x0.clone();
    let mut sum = 0.0;
    for (t, &y) in path.values().iter().enumerate() {
        if t >= burn_in {
            sum += checked_phi(phi, bound, &x)?;
        }
        x = kernel.step(y, &x, &mut rng);
    }
    Ok(Reference::Surrogate { value: sum / (steps - burn_in) as f64, steps, burn_in })
}

/// Per-`N` estimates of `‖(1/N) Σ_{t<N} Φ(X_t) − ref‖_p` over `reps`
/// trajectories from `x0`. Averages for all `N` come from nested prefixes of
/// the same runs.
#[allow(clippy::too_many_arguments)]
pub fn lln_experiment<K: RandomKernel>(
    kernel: &K,
    env: &EnvProcess,
    x0: &K::State,
    phi: &(dyn Fn(&K::State) -> f64 + Sync),
    bound: f64,
    probes: &[K::State],
    reference: Reference,
    n_grid: &[usize],
    reps: usize,
    p: f64,
    stream: &SeedStream,
) -> Result<LlnReport> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Argument(format!("moment order p = {p} must be at least 1")));
    }
    if reps < 2 || n_grid.is_empty() || n_grid[0] == 0 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("need reps >= 2 and a strictly increasing positive grid".into()));
    }
    for x in probes {
        checked_phi(phi, bound, x)?;
    }
    let n_max = *n_grid.last().unwrap();
    let r = reference.value();
    let env_stream = stream.derive("env");
    let chain_stream = stream.derive("chain");
    let devs: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let path = sample_path(env, 0, n_max as i64 - 1, &mut env_stream.rng(i))?;
            let mut rng = chain_stream.rng(i);
            let mut x = x0.clone();
            let mut sum = 0.0;
            let mut out = Vec::with_capacity(n_grid.len());
            let mut next = 0;
            for (t, &y) in path.values().iter().enumerate() {
                sum += checked_phi(phi, bound, &x)?;
                if n_grid[next] == t + 1 {
                    out.push((sum / (t + 1) as f64 - r).abs().powf(p));
                    next += 1;
                    if next == n_grid.len() {
                        break;
                    }
                }
                x = kernel.step(y, &x, &mut rng);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let points: Vec<LlnPoint> = n_grid
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let col: Vec<f64> = devs.iter().map(|d| d[j]).collect();
            LlnPoint { n, p, error: stats::mean(&col).powf(1.0 / p), moment_std_error: stats::std_error(&col) }
        })
        .collect();
    let decreasing = points.windows(2).all(|w| w[1].error <= w[0].error);
    Ok(LlnReport { points, reference, decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{FiniteMarkov, Marginal};
    use crate::mcre::FiniteKernel;

    #[test]
    fn constant_functional_has_zero_error() {
        let k = FiniteKernel::new(vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]]).unwrap();
        let env = EnvProcess::Iid(Marginal::Constant(0.0));
        let rep = lln_experiment(&k, &env, &0, &|_| 3.0, 3.0, &[0, 1], Reference::Exact(3.0), &[10, 40], 10, 2.0, &SeedStream::new(1))
            .unwrap();
        assert!(rep.points.iter().all(|p| p.error == 0.0));
    }

    #[test]
    fn unbounded_functional_rejected() {
        let k = FiniteKernel::new(vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]]).unwrap();
        let env = EnvProcess::FiniteMarkov(FiniteMarkov::labelled(vec![vec![1.0]]).unwrap());
        let phi = |x: &usize| *x as f64 * 10.0;
        let err = lln_experiment(&k, &env, &0, &phi, 1.0, &[0, 1], Reference::Exact(0.0), &[10], 10, 1.0, &SeedStream::new(1));
        assert!(matches!(err, Err(Error::Validation(_))));
    }
}
