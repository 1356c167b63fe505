//! Empirical laws, histogram binning and total-variation distances.

use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

/// Equal-width bins `[low + i·width, low + (i+1)·width)`, `i < bins`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Binning {
    pub low: f64,
    pub width: f64,
    pub bins: usize,
}

/// Upper limit on the number of bins a data-driven binning may create.
pub const MAX_BINS: usize = 10_000;

impl Binning {
    pub fn new(low: f64, width: f64, bins: usize) -> Result<Self> {
        if !(width > 0.0 && width.is_finite() && low.is_finite() && bins > 0) {
            return Err(Error::Validation(format!("invalid binning low = {low}, width = {width}, bins = {bins}")));
        }
        Ok(Self { low, width, bins })
    }

    /// Freedman–Diaconis width `2·IQR·n^{−1/3}` on `samples`, with bins
    /// covering their range. A zero IQR falls back to range / √n.
    pub fn freedman_diaconis(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("binning needs a non-empty finite sample".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        let n = sorted.len() as f64;
        let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
        let range = hi - lo;
        let mut width = 2.0 * iqr / n.cbrt();
        if !(width > 0.0) {
            width = range / n.sqrt();
        }
        if !(width > 0.0) {
            return Self::new(lo, 1.0, 1);
        }
        width = width.max(range / MAX_BINS as f64);
        let bins = ((range / width).floor() as usize + 1).min(MAX_BINS);
        Self::new(lo, width, bins)
    }

    /// Bin index of `v`; values outside are clamped to the end bins.
    pub fn index(&self, v: f64) -> usize {
        let i = ((v - self.low) / self.width).floor();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(self.bins - 1)
        }
    }

    /// Merges `factor` consecutive bins.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Argument("coarsening factor must be positive".into()));
        }
        Self::new(self.low, self.width * factor as f64, self.bins.div_ceil(factor))
    }
}

/// Normalized histogram on a fixed binning.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub binning: Binning,
    pub weights: Vec<f64>,
}

impl Histogram {
    pub fn from_samples(samples: &[f64], binning: Binning) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Validation("histogram of an empty sample".into()));
        }
        let mut weights = vec![0.0; binning.bins];
        let w = 1.0 / samples.len() as f64;
        for &s in samples {
            weights[binning.index(s)] += w;
        }
        Ok(Self { binning, weights })
    }

    /// Same law on a grid coarser by `factor`; total mass is unchanged.
    pub fn rebin(&self, factor: usize) -> Result<Self> {
        let binning = self.binning.coarsen(factor)?;
        let weights = self.weights.chunks(factor).map(|c| c.iter().sum()).collect();
        Ok(Self { binning, weights })
    }
}

/// Law of `X_n` estimated from replications.
#[derive(Debug, Clone, PartialEq)]
pub enum EmpiricalLaw {
    /// Weights on the states `0..k`.
    Discrete(Vec<f64>),
    /// Scalar samples.
    Samples(Vec<f64>),
}

impl EmpiricalLaw {
    pub fn from_states(states: &[usize], size: usize) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Validation("empirical law of an empty sample".into()));
        }
        let mut w = vec![0.0; size];
        for &s in states {
            *w.get_mut(s).ok_or_else(|| Error::Range(format!("state {s} outside 0..{size}")))? += 1.0;
        }
        let n = states.len() as f64;
        w.iter_mut().for_each(|v| *v /= n);
        Ok(Self::Discrete(w))
    }

    pub fn histogram(&self, binning: Binning) -> Result<Histogram> {
        match self {
            Self::Samples(s) => Histogram::from_samples(s, binning),
            Self::Discrete(_) => Err(Error::Validation("discrete law has no histogram".into())),
        }
    }
}

/// `Σ |p_i − q_i|`, in `[0, 2]`.
pub fn tv_weights(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Validation(format!("laws on {} and {} states", p.len(), q.len())));
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

/// TV between histograms on one binning.
pub fn tv_hist(a: &Histogram, b: &Histogram) -> Result<f64> {
    if a.binning != b.binning {
        return Err(Error::Validation(format!("binning mismatch: {:?} vs {:?}", a.binning, b.binning)));
    }
    tv_weights(&a.weights, &b.weights)
}

/// TV between two empirical laws; continuous samples share one
/// Freedman–Diaconis binning of the pooled sample. Returns the distance and,
/// for binned laws, the bin width.
pub fn tv_laws(a: &EmpiricalLaw, b: &EmpiricalLaw) -> Result<(f64, Option<f64>)> {
    match (a, b) {
        (EmpiricalLaw::Discrete(p), EmpiricalLaw::Discrete(q)) => Ok((tv_weights(p, q)?, None)),
        (EmpiricalLaw::Samples(x), EmpiricalLaw::Samples(y)) => {
            let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
            let binning = Binning::freedman_diaconis(&pooled)?;
            let d = tv_hist(&Histogram::from_samples(x, binning)?, &Histogram::from_samples(y, binning)?)?;
            Ok((d, Some(binning.width)))
        }
        _ => Err(Error::Validation("cannot compare a discrete law with a sampled one".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_examples() {
        assert_eq!(tv_weights(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tv_weights(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert_eq!(tv_weights(&[0.5, 0.5], &[0.75, 0.25]).unwrap(), 0.5);
        assert!(tv_weights(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn binning_mismatch_rejected() {
        let a = Histogram::from_samples(&[0.0, 1.0], Binning::new(0.0, 1.0, 2).unwrap()).unwrap();
        let b = Histogram::from_samples(&[0.0, 1.0], Binning::new(0.0, 0.5, 4).unwrap()).unwrap();
        assert!(matches!(tv_hist(&a, &b), Err(Error::Validation(_))));
    }

    #[test]
    fn rebin_conserves_mass() {
        let s: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let h = Histogram::from_samples(&s, Binning::freedman_diaconis(&s).unwrap()).unwrap();
        for f in [2, 3, 7] {
            let c = h.rebin(f).unwrap();
            assert!((c.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_sample_single_bin() {
        let b = Binning::freedman_diaconis(&[2.0; 10]).unwrap();
        assert_eq!(b.bins, 1);
    }
}
