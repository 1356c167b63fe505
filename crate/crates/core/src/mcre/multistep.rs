//! p-step block kernels.

use std::sync::Arc;

use rand::Rng;

use super::verify::{check_reps, estimate_lyapunov_mean, DriftReport};
use super::RandomKernel;
use crate::env::EnvPath;
use crate::error::{Error, Result};
use crate::report::fmt_f64;
use crate::rng::SeedStream;

/// Contraction factor of an environment block.
pub type BlockGamma = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Block drift data: `[Q(y_p)⋯Q(y_1)V](x) <= γ(y_1..y_p) V(x) + K`, together
/// with the one-step bound `[Q(y)V](x) <= K₁ V(x) + K₁`.
#[derive(Clone)]
pub struct BlockDrift {
    pub gamma: BlockGamma,
    pub k: f64,
    pub one_step_k: f64,
}

/// The p-fold composition of a base kernel, driven by blocks of `p`
/// consecutive environment values.
#[derive(Clone)]
pub struct MultistepKernel<K> {
    base: K,
    p: usize,
    drift: BlockDrift,
}

pub fn multistep_wrap<K: RandomKernel>(kernel: K, p: usize, drift: BlockDrift) -> Result<MultistepKernel<K>> {
    if p == 0 {
        return Err(Error::Argument("block length p must be at least 1".into()));
    }
    if !(drift.k >= 1.0) {
        return Err(Error::Validation(format!("block constant K = {} must be at least 1", drift.k)));
    }
    Ok(MultistepKernel { base: kernel, p, drift })
}

impl<K: RandomKernel> MultistepKernel<K> {
    pub fn base(&self) -> &K {
        &self.base
    }

    pub fn block_len(&self) -> usize {
        self.p
    }

    pub fn drift(&self) -> &BlockDrift {
        &self.drift
    }

    pub fn block_gamma(&self, block: &[f64]) -> f64 {
        (self.drift.gamma)(block)
    }

    /// One block step: `p` base steps consuming `block` in order.
    pub fn step_block<R: Rng + ?Sized>(&self, block: &[f64], x: &K::State, rng: &mut R) -> Result<K::State> {
        if block.len() != self.p {
            return Err(Error::Range(format!("block of {} values for p = {}", block.len(), self.p)));
        }
        let mut state = x.clone();
        for &y in block {
            state = self.base.step(y, &state, rng);
        }
        Ok(state)
    }

    /// Block environment `(Y_{p(t-1)+j}, ..., Y_{pt+j-1})` for block index
    /// `t >= 1` and offset `j ∈ [0, p)`.
    pub fn block_env(&self, path: &EnvPath, t: i64, j: usize) -> Result<Vec<f64>> {
        if j >= self.p {
            return Err(Error::Argument(format!("offset {j} must be below p = {}", self.p)));
        }
        let p = self.p as i64;
        let first = p * (t - 1) + j as i64;
        (first..first + p).map(|s| path.at(s)).collect()
    }

    /// Runs `horizon` block steps on `path` starting at its first time,
    /// returning the `horizon + 1` states.
    pub fn run<R: Rng + ?Sized>(
        &self,
        x0: &K::State,
        path: &EnvPath,
        horizon: usize,
        rng: &mut R,
    ) -> Result<Vec<K::State>> {
        if path.len() < self.p * horizon {
            return Err(Error::Range(format!(
                "environment window of {} values is shorter than p * horizon = {}",
                path.len(),
                self.p * horizon
            )));
        }
        let mut states = Vec::with_capacity(horizon + 1);
        states.push(x0.clone());
        for block in path.values().chunks_exact(self.p).take(horizon) {
            let next = self.step_block(block, states.last().unwrap(), rng)?;
            states.push(next);
        }
        Ok(states)
    }
}

impl MultistepKernel<super::FiniteKernel> {
    /// Exact block transition matrix `Q(y_1) Q(y_2) ⋯ Q(y_p)` (rows index the
    /// start state).
    pub fn block_matrix(&self, block: &[f64]) -> Result<Vec<Vec<f64>>> {
        if block.len() != self.p {
            return Err(Error::Range(format!("block of {} values for p = {}", block.len(), self.p)));
        }
        let n = self.base.size();
        let mut acc: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        for &y in block {
            let q = self.base.matrix(y);
            acc = acc
                .iter()
                .map(|row| (0..n).map(|j| row.iter().zip(q).map(|(a, qr)| a * qr[j]).sum()).collect())
                .collect();
        }
        Ok(acc)
    }
}

/// Drift check for a block kernel at probes `(block, x)`.
pub fn block_drift_check<K: RandomKernel>(
    kernel: &MultistepKernel<K>,
    lyapunov: &(dyn Fn(&K::State) -> f64 + Sync),
    probes: &[(Vec<f64>, K::State)],
    reps: usize,
    tolerance_se: f64,
    stream: &SeedStream,
) -> Result<Vec<DriftReport>> {
    check_reps(reps)?;
    probes
        .iter()
        .enumerate()
        .map(|(i, (block, x))| {
            if block.len() != kernel.p {
                return Err(Error::Range(format!("probe block of length {} for p = {}", block.len(), kernel.p)));
            }
            let sub = stream.derive(&format!("block-probe-{i}"));
            let (estimate, std_error) = estimate_lyapunov_mean(
                reps,
                &sub,
                |rng| kernel.step_block(block, x, rng).expect("block length checked"),
                lyapunov,
            )?;
            let bound = kernel.block_gamma(block) * lyapunov(x) + kernel.drift.k;
            let ys: Vec<String> = block.iter().map(|y| fmt_f64(*y)).collect();
            Ok(DriftReport {
                probe: format!("y=[{}];x={:?}", ys.join(" "), x),
                estimate,
                std_error,
                bound,
                pass: estimate <= bound + tolerance_se * std_error,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcre::{DeterministicKernel, StateSpace};

    fn drift() -> BlockDrift {
        BlockDrift { gamma: Arc::new(|_| 1.0), k: 1.0, one_step_k: 1.0 }
    }

    #[test]
    fn wrap_rejects_zero_block() {
        let k = DeterministicKernel::new(StateSpace::Continuous { dim: 1 }, |_, x: &f64| *x);
        assert!(multistep_wrap(k, 0, drift()).is_err());
    }

    #[test]
    fn block_consumes_values_in_order() {
        let k = DeterministicKernel::new(StateSpace::Continuous { dim: 1 }, |y, x: &f64| 10.0 * x + y);
        let m = multistep_wrap(k, 3, drift()).unwrap();
        let mut rng = SeedStream::new(0).rng(0);
        assert_eq!(m.step_block(&[1.0, 2.0, 3.0], &0.0, &mut rng).unwrap(), 123.0);
        let path = EnvPath::new(0, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let states = m.run(&0.0, &path, 2, &mut rng).unwrap();
        assert_eq!(states, vec![0.0, 123.0, 123_456.0]);
        assert!(matches!(m.run(&0.0, &path, 3, &mut rng), Err(Error::Range(_))));
    }

    #[test]
    fn block_environment_offsets() {
        let k = DeterministicKernel::new(StateSpace::Continuous { dim: 1 }, |_, x: &f64| *x);
        let m = multistep_wrap(k, 2, drift()).unwrap();
        let path = EnvPath::new(0, (0..10).map(f64::from).collect());
        assert_eq!(m.block_env(&path, 1, 0).unwrap(), vec![0.0, 1.0]);
        assert_eq!(m.block_env(&path, 3, 1).unwrap(), vec![5.0, 6.0]);
        assert!(m.block_env(&path, 6, 0).is_err());
    }
}
