//! Stationary environment processes and sampled windows of them.

use rand::Rng;
use rand_distr::{Distribution, Uniform as UniformDist};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;
const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 1_000_000;

/// Default truncation lag of moving-average environments. The neglected
/// mass is the coefficient tail beyond the lag.
pub const DEFAULT_MA_LAG: usize = 50;

/// One-dimensional marginal laws used for i.i.d. environments and
/// moving-average innovations.
#[derive(Debug, Clone, PartialEq)]
pub enum Marginal {
    Constant(f64),
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    Uniform { low: f64, high: f64 },
    /// `P(Y = k) ∝ exp(-decay * k)` on `k = 1, 2, ...`.
    Geometric { decay: f64 },
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        match self {
            Marginal::Constant(c) if !c.is_finite() => Err(Error::Validation("constant marginal must be finite".into())),
            Marginal::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(Error::Validation("discrete marginal needs matching non-empty values/probs".into()));
                }
                if probs.iter().any(|p| !(*p >= 0.0)) {
                    return Err(Error::Validation("discrete marginal has a negative probability".into()));
                }
                let s: f64 = probs.iter().sum();
                if (s - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::Validation(format!("discrete marginal sums to {s}")));
                }
                Ok(())
            }
            Marginal::Uniform { low, high } if !(low < high) || !low.is_finite() || !high.is_finite() => {
                Err(Error::Validation(format!("uniform marginal needs low < high, got [{low}, {high}]")))
            }
            Marginal::Geometric { decay } if !(*decay > 0.0) => {
                Err(Error::Validation("geometric marginal needs decay > 0".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Marginal::Constant(c) => *c,
            Marginal::Discrete { values, probs } => values[sample_index(probs, rng.random::<f64>())],
            Marginal::Uniform { low, high } => UniformDist::new(*low, *high).expect("validated bounds").sample(rng),
            Marginal::Geometric { decay } => {
                // Inversion: P(Y > k) = exp(-decay * k).
                let u: f64 = 1.0 - rng.random::<f64>();
                (1.0 + (-u.ln() / decay).floor()).max(1.0)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Marginal::Constant(c) => *c,
            Marginal::Discrete { values, probs } => values.iter().zip(probs).map(|(v, p)| v * p).sum(),
            Marginal::Uniform { low, high } => 0.5 * (low + high),
            Marginal::Geometric { decay } => 1.0 / (1.0 - (-decay).exp()),
        }
    }

    /// Closed support bounds; `None` for unbounded marginals.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            Marginal::Constant(c) => Some((*c, *c)),
            Marginal::Discrete { values, .. } => Some(min_max(values)),
            Marginal::Uniform { low, high } => Some((*low, *high)),
            Marginal::Geometric { .. } => None,
        }
    }

    /// Finite support, when there is one.
    pub fn support(&self) -> Option<Vec<f64>> {
        match self {
            Marginal::Constant(c) => Some(vec![*c]),
            Marginal::Discrete { values, probs } => Some(
                values.iter().zip(probs).filter(|(_, p)| **p > 0.0).map(|(v, _)| *v).collect(),
            ),
            _ => None,
        }
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Inverse-CDF lookup of `u` in a probability vector.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Round-off: fall back to the last state with positive mass.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// Stationary finite-state Markov environment with a value per state.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMarkov {
    values: Vec<f64>,
    transition: Vec<Vec<f64>>,
    initial: Vec<f64>,
}

impl FiniteMarkov {
    /// Builds the chain started from its invariant law.
    pub fn new(values: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<Self> {
        validate_stochastic(&transition)?;
        if values.len() != transition.len() {
            return Err(Error::Validation(format!(
                "{} state values for a {}-state chain",
                values.len(),
                transition.len()
            )));
        }
        let initial = invariant_law(&transition)?;
        Ok(Self { values, transition, initial })
    }

    /// Builds the chain with an explicit initial law, which must be invariant.
    pub fn with_initial(values: Vec<f64>, transition: Vec<Vec<f64>>, initial: Vec<f64>) -> Result<Self> {
        let chain = Self::new(values, transition)?;
        if initial.len() != chain.initial.len()
            || initial.iter().zip(&chain.initial).any(|(a, b)| (a - b).abs() > STATIONARY_TOL)
        {
            return Err(Error::Validation("initial law is not invariant; the environment would not be stationary".into()));
        }
        Ok(Self { initial, ..chain })
    }

    /// Chain whose values are the state indices `0, 1, ...`.
    pub fn labelled(transition: Vec<Vec<f64>>) -> Result<Self> {
        let values = (0..transition.len()).map(|i| i as f64).collect();
        Self::new(values, transition)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    fn sample_states<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let mut states = Vec::with_capacity(len);
        let mut s = sample_index(&self.initial, rng.random());
        for i in 0..len {
            if i > 0 {
                s = sample_index(&self.transition[s], rng.random());
            }
            states.push(s);
        }
        states
    }
}

/// Two-sided moving average `Y_t = Σ_{i=-L}^{L} a_i ζ_{t-i}` of i.i.d. innovations.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingAverage {
    /// `coefficients[i + L] = a_i`.
    coefficients: Vec<f64>,
    innovation: Marginal,
}

impl MovingAverage {
    pub fn new(coefficients: Vec<f64>, innovation: Marginal) -> Result<Self> {
        if coefficients.len().is_multiple_of(2) {
            return Err(Error::Validation("moving-average coefficients must cover -L..=L (odd length)".into()));
        }
        if coefficients.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::Validation("moving-average coefficients must be finite and non-negative".into()));
        }
        innovation.validate()?;
        Ok(Self { coefficients, innovation })
    }

    /// Truncates an infinite coefficient sequence `a(i)` at `|i| <= lag`.
    pub fn truncated(a: impl Fn(i64) -> f64, lag: usize, innovation: Marginal) -> Result<Self> {
        let l = lag as i64;
        Self::new((-l..=l).map(a).collect(), innovation)
    }

    pub fn lag(&self) -> usize {
        self.coefficients.len() / 2
    }

    pub fn coefficient(&self, i: i64) -> f64 {
        let l = self.lag() as i64;
        if i.abs() > l {
            0.0
        } else {
            self.coefficients[(i + l) as usize]
        }
    }

    fn sum(&self) -> f64 {
        self.coefficients.iter().sum()
    }
}

/// A strictly stationary environment `Y_t`, `t ∈ ℤ`.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvProcess {
    Iid(Marginal),
    FiniteMarkov(FiniteMarkov),
    MovingAverage(MovingAverage),
}

impl EnvProcess {
    pub fn validate(&self) -> Result<()> {
        match self {
            EnvProcess::Iid(m) => m.validate(),
            EnvProcess::FiniteMarkov(c) => validate_stochastic(&c.transition),
            EnvProcess::MovingAverage(ma) => ma.innovation.validate(),
        }
    }

    /// Stationary mean of `Y_0`.
    pub fn mean(&self) -> f64 {
        match self {
            EnvProcess::Iid(m) => m.mean(),
            EnvProcess::FiniteMarkov(c) => c.values.iter().zip(&c.initial).map(|(v, p)| v * p).sum(),
            EnvProcess::MovingAverage(ma) => ma.sum() * ma.innovation.mean(),
        }
    }

    /// Bounds of the range of `Y_t`; `None` when unbounded.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            EnvProcess::Iid(m) => m.bounds(),
            EnvProcess::FiniteMarkov(c) => Some(min_max(&c.values)),
            EnvProcess::MovingAverage(ma) => {
                let (lo, hi) = ma.innovation.bounds()?;
                let s = ma.sum();
                Some((s * lo, s * hi))
            }
        }
    }

    /// The finite set of values `Y_0` can take, if finite.
    pub fn support(&self) -> Option<Vec<f64>> {
        match self {
            EnvProcess::Iid(m) => m.support(),
            EnvProcess::FiniteMarkov(c) => Some(
                c.values.iter().zip(&c.initial).filter(|(_, p)| **p > 0.0).map(|(v, _)| *v).collect(),
            ),
            EnvProcess::MovingAverage(_) => None,
        }
    }
}

/// A sampled window `Y_{t0}, ..., Y_{t1}` of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvPath {
    t0: i64,
    values: Vec<f64>,
}

impl EnvPath {
    pub fn new(t0: i64, values: Vec<f64>) -> Self {
        Self { t0, values }
    }

    pub fn start(&self) -> i64 {
        self.t0
    }

    /// Last time in the window (inclusive).
    pub fn end(&self) -> i64 {
        self.t0 + self.values.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, t: i64) -> Option<f64> {
        if t < self.t0 {
            return None;
        }
        self.values.get((t - self.t0) as usize).copied()
    }

    /// `Y_t` for `t` in the window, or a range error.
    pub fn at(&self, t: i64) -> Result<f64> {
        self.get(t)
            .ok_or_else(|| Error::Range(format!("time {t} outside window [{}, {}]", self.t0, self.end())))
    }
}

/// Samples `Y_{t0..=t1}` with the stationary finite-dimensional laws.
pub fn sample_path<R: Rng + ?Sized>(process: &EnvProcess, t0: i64, t1: i64, rng: &mut R) -> Result<EnvPath> {
    if t0 > t1 {
        return Err(Error::Argument(format!("empty window [{t0}, {t1}]")));
    }
    process.validate()?;
    let len = (t1 - t0 + 1) as usize;
    let values = match process {
        EnvProcess::Iid(m) => (0..len).map(|_| m.sample(rng)).collect(),
        EnvProcess::FiniteMarkov(c) => c.sample_states(len, rng).into_iter().map(|s| c.values[s]).collect(),
        EnvProcess::MovingAverage(ma) => {
            // ζ_s for s in [t0 - L, t1 + L]; index j ↔ s = t0 - L + j.
            let lag = ma.lag();
            let zeta: Vec<f64> = (0..len + 2 * lag).map(|_| ma.innovation.sample(rng)).collect();
            (0..len)
                .map(|k| {
                    // Y_{t0+k} = Σ_i a_i ζ_{t0+k-i}, index k + L - i.
                    ma.coefficients
                        .iter()
                        .enumerate()
                        .map(|(ci, a)| a * zeta[k + 2 * lag - ci])
                        .sum()
                })
                .collect()
        }
    };
    Ok(EnvPath { t0, values })
}

/// Left shift by `k`: the output at time `t` is the input at `t + k`. The
/// output keeps the input's start time for `k >= 0`.
pub fn shift(path: &EnvPath, k: i64) -> Result<EnvPath> {
    let len = path.values.len() as i64;
    if k.abs() >= len {
        return Err(Error::Range(format!("shift by {k} leaves no overlap with a window of length {len}")));
    }
    if k >= 0 {
        Ok(EnvPath { t0: path.t0, values: path.values[k as usize..].to_vec() })
    } else {
        let m = (-k) as usize;
        Ok(EnvPath { t0: path.t0 + m as i64, values: path.values[..path.values.len() - m].to_vec() })
    }
}

pub(crate) fn validate_stochastic(matrix: &[Vec<f64>]) -> Result<()> {
    let n = matrix.len();
    if n == 0 {
        return Err(Error::Validation("empty transition matrix".into()));
    }
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Validation(format!("row {i} has {} entries, expected {n}", row.len())));
        }
        if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Validation(format!("row {i} has a negative or non-finite entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Validation(format!("row {i} sums to {s}, not 1")));
        }
    }
    Ok(())
}

/// Whether every state reaches every other state through positive entries.
pub(crate) fn is_irreducible(matrix: &[Vec<f64>]) -> bool {
    let n = matrix.len();
    let reach_all = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let p = if forward { matrix[i][j] } else { matrix[j][i] };
                if p > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach_all(true) && reach_all(false)
}

/// Invariant law of a stochastic matrix by power iteration from the uniform
/// law.
pub fn invariant_law(matrix: &[Vec<f64>]) -> Result<Vec<f64>> {
    validate_stochastic(matrix)?;
    if !is_irreducible(matrix) {
        return Err(Error::Validation("transition matrix is reducible".into()));
    }
    let n = matrix.len();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..POWER_MAX_ITER {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in matrix.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                next[j] += pi[i] * p;
            }
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= s);
        let delta: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if delta < POWER_TOL {
            return Ok(pi);
        }
    }
    Err(Error::Numeric(format!("power iteration did not converge within {POWER_MAX_ITER} iterations")))
}
