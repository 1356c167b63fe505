//! Exact finite-state ground truth: the joint chain `(X_t, Y_t)` on a finite
//! product space.

use nalgebra::{DMatrix, DVector};

use crate::env::{EnvProcess, FiniteMarkov};
use crate::error::{Error, Result};
use crate::mcre::FiniteKernel;

use super::law::tv_weights;

/// Finite kernel `Q(y)` driven by a finite Markov environment whose values
/// are the labels `0..k`. Joint state `(x, y)` has index `x · k + y`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOracle {
    kernel: FiniteKernel,
    env: FiniteMarkov,
    joint: Vec<Vec<f64>>,
    joint_invariant: Vec<f64>,
    mu_star: Vec<f64>,
}

/// Exact output of [`DiscreteOracle::exact`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleExact {
    pub law: Vec<f64>,
    pub mu_star: Vec<f64>,
    pub tv: f64,
}

/// Whether some power of the matrix is entrywise positive (Wielandt bound).
fn is_primitive(matrix: &[Vec<f64>]) -> bool {
    let n = matrix.len();
    let adj: Vec<Vec<bool>> = matrix.iter().map(|r| r.iter().map(|p| *p > 0.0).collect()).collect();
    let mut power = adj.clone();
    for _ in 0..(n - 1) * (n - 1) + 1 {
        if power.iter().all(|r| r.iter().all(|b| *b)) {
            return true;
        }
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for k in 0..n {
                if power[i][k] {
                    for j in 0..n {
                        next[i][j] |= adj[k][j];
                    }
                }
            }
        }
        power = next;
    }
    power.iter().all(|r| r.iter().all(|b| *b))
}

/// Invariant law by solving `π (T − I) = 0`, `Σπ = 1`.
fn solve_invariant(matrix: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = matrix.len();
    let mut a = DMatrix::from_fn(n, n, |i, j| matrix[j][i] - if i == j { 1.0 } else { 0.0 });
    let mut rhs = DVector::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    rhs[n - 1] = 1.0;
    let pi = a.lu().solve(&rhs).ok_or_else(|| Error::Numeric("singular invariant-law system".into()))?;
    Ok(pi.iter().map(|v| v.max(0.0)).collect())
}

impl DiscreteOracle {
    pub fn new(kernel: FiniteKernel, env: FiniteMarkov) -> Result<Self> {
        let k = env.values().len();
        if kernel.labels() != k {
            return Err(Error::Validation(format!("{} transition matrices for {k} environment states", kernel.labels())));
        }
        for (i, v) in env.values().iter().enumerate() {
            if *v != i as f64 {
                return Err(Error::Validation(format!("environment value {v} at index {i} must equal its label")));
            }
        }
        let n = kernel.size();
        let p = env.transition();
        let mut joint = vec![vec![0.0; n * k]; n * k];
        for x in 0..n {
            for y in 0..k {
                let q = &kernel.matrices()[y];
                for x2 in 0..n {
                    for y2 in 0..k {
                        joint[x * k + y][x2 * k + y2] = q[x][x2] * p[y][y2];
                    }
                }
            }
        }
        crate::env::validate_stochastic(&joint)?;
        if !is_primitive(&joint) {
            return Err(Error::Validation("joint chain is not irreducible and aperiodic".into()));
        }
        let joint_invariant = solve_invariant(&joint)?;
        let mu_star = (0..n).map(|x| (0..k).map(|y| joint_invariant[x * k + y]).sum()).collect();
        Ok(Self { kernel, env, joint, joint_invariant, mu_star })
    }

    pub fn kernel(&self) -> &FiniteKernel {
        &self.kernel
    }

    pub fn env(&self) -> &FiniteMarkov {
        &self.env
    }

    pub fn env_process(&self) -> EnvProcess {
        EnvProcess::FiniteMarkov(self.env.clone())
    }

    pub fn joint(&self) -> &[Vec<f64>] {
        &self.joint
    }

    pub fn joint_invariant(&self) -> &[f64] {
        &self.joint_invariant
    }

    /// X-marginal of the joint invariant law.
    pub fn mu_star(&self) -> &[f64] {
        &self.mu_star
    }

    pub fn size(&self) -> usize {
        self.kernel.size()
    }

    /// Joint laws at times `0..=n_max`, started from `δ_{x0} ⊗ π_env`.
    pub fn joint_laws(&self, x0: usize, n_max: usize) -> Result<Vec<Vec<f64>>> {
        let n = self.size();
        if x0 >= n {
            return Err(Error::Range(format!("start {x0} outside the {n} states")));
        }
        let k = self.env.values().len();
        let mut law = vec![0.0; n * k];
        for (y, w) in self.env.initial().iter().enumerate() {
            law[x0 * k + y] = *w;
        }
        let mut out = Vec::with_capacity(n_max + 1);
        out.push(law.clone());
        for _ in 0..n_max {
            let mut next = vec![0.0; n * k];
            for (i, row) in self.joint.iter().enumerate() {
                if law[i] != 0.0 {
                    for (j, p) in row.iter().enumerate() {
                        next[j] += law[i] * p;
                    }
                }
            }
            law = next;
            out.push(law.clone());
        }
        Ok(out)
    }

    fn marginal(&self, joint: &[f64]) -> Vec<f64> {
        let k = self.env.values().len();
        joint.chunks(k).map(|c| c.iter().sum()).collect()
    }

    /// Exact laws of `X_0, ..., X_{n_max}` from `x0`.
    pub fn laws(&self, x0: usize, n_max: usize) -> Result<Vec<Vec<f64>>> {
        Ok(self.joint_laws(x0, n_max)?.iter().map(|j| self.marginal(j)).collect())
    }

    /// Law of `X_n`, `μ*` and `d_TV(law, μ*)`.
    pub fn exact(&self, x0: usize, n: usize) -> Result<OracleExact> {
        let law = self.laws(x0, n)?.pop().expect("n + 1 laws");
        let tv = tv_weights(&law, &self.mu_star)?;
        Ok(OracleExact { law, mu_star: self.mu_star.clone(), tv })
    }
}

/// See [`DiscreteOracle::exact`].
pub fn oracle_exact(oracle: &DiscreteOracle, x0: usize, n: usize) -> Result<OracleExact> {
    oracle.exact(x0, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> DiscreteOracle {
        let kernel = FiniteKernel::new(vec![vec![vec![0.9, 0.1], vec![0.5, 0.5]], vec![vec![0.2, 0.8], vec![0.3, 0.7]]]).unwrap();
        let env = FiniteMarkov::labelled(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        DiscreteOracle::new(kernel, env).unwrap()
    }

    #[test]
    fn invariant_law_matches_precomputed() {
        let o = two_by_two();
        let expected = [455.0 / 1344.0, 0.191_964_285_714_285_7, 0.232_886_904_761_904_8, 0.236_607_142_857_142_85];
        for (a, b) in o.joint_invariant().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!((o.mu_star()[0] - 713.0 / 1344.0).abs() < 1e-12);
    }

    #[test]
    fn exact_tv_values() {
        let o = two_by_two();
        let cases = [(0, 0, 0.938_988_095_238_095_2), (0, 1, 0.138_988_095_238_095_2), (1, 0, 1.061_011_904_761_904_8)];
        for (x0, n, tv) in cases {
            assert!((o.exact(x0, n).unwrap().tv - tv).abs() < 1e-9, "{x0} {n}");
        }
        let a = o.exact(0, 200).unwrap();
        let b = o.exact(1, 200).unwrap();
        assert!(a.tv < 1e-8 && b.tv < 1e-8);
        assert!(tv_weights(&a.law, &b.law).unwrap() < 1e-10);
    }

    #[test]
    fn identical_kernels_reduce_to_homogeneous_chain() {
        let q = vec![vec![0.9, 0.1], vec![0.2, 0.8]];
        let kernel = FiniteKernel::new(vec![q.clone(), q]).unwrap();
        let env = FiniteMarkov::labelled(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let o = DiscreteOracle::new(kernel, env).unwrap();
        assert!((o.mu_star()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((o.exact(1, 0).unwrap().law[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn periodic_joint_chain_rejected() {
        let flip = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let kernel = FiniteKernel::new(vec![flip]).unwrap();
        let env = FiniteMarkov::labelled(vec![vec![1.0]]).unwrap();
        assert!(matches!(DiscreteOracle::new(kernel, env), Err(Error::Validation(_))));
    }
}
