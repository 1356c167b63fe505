//! Decay-rate fits for distance curves.

use crate::error::{Error, Result};
use crate::report::{fmt_f64, CsvRecord};

/// Minimum number of positive points a fit needs.
pub const MIN_FIT_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayModel {
    /// `d(n) ≈ c1 · exp(−c2 · n^{1/3})`.
    StretchedCubeRoot,
    /// `d(n) ≈ c1 · exp(−c2 · n)`.
    Exponential,
}

impl DecayModel {
    pub fn name(&self) -> &'static str {
        match self {
            DecayModel::StretchedCubeRoot => "exp_cbrt",
            DecayModel::Exponential => "exp",
        }
    }

    fn abscissa(&self, n: f64) -> f64 {
        match self {
            DecayModel::StretchedCubeRoot => n.cbrt(),
            DecayModel::Exponential => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelFit {
    pub model: DecayModel,
    pub c1: f64,
    pub c2: f64,
    pub r2: f64,
}

/// Both fits; `primary` is the cube-root model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub primary: ModelFit,
    pub alternative: ModelFit,
    pub points_used: usize,
}

impl RateFit {
    /// A decay was detected.
    pub fn convergent(&self) -> bool {
        self.primary.c2 > 1e-9
    }

    pub fn better(&self) -> ModelFit {
        if self.alternative.r2 > self.primary.r2 {
            self.alternative
        } else {
            self.primary
        }
    }

    pub fn rows(&self) -> [RateFitRow; 2] {
        [
            RateFitRow { fit: self.primary, alt_r2: self.alternative.r2 },
            RateFitRow { fit: self.alternative, alt_r2: self.primary.r2 },
        ]
    }
}

/// One CSV row: a model and the R² of the other model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFitRow {
    pub fit: ModelFit,
    pub alt_r2: f64,
}

impl CsvRecord for RateFitRow {
    const HEADER: &'static [&'static str] = &["model", "c1", "c2", "r2", "alt_model_r2"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.fit.model.name().to_string(),
            fmt_f64(self.fit.c1),
            fmt_f64(self.fit.c2),
            fmt_f64(self.fit.r2),
            fmt_f64(self.alt_r2),
        ]
    }
}

fn least_squares(model: DecayModel, pts: &[(f64, f64)]) -> ModelFit {
    let xs: Vec<f64> = pts.iter().map(|(n, _)| model.abscissa(*n)).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, d)| d.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-24 {
        1.0
    } else {
        0.0
    };
    ModelFit { model, c1: intercept.exp(), c2: -slope, r2 }
}

/// Fits `ln d ≈ ln c1 − c2 · n^{1/3}` and `ln d ≈ ln c1 − c2 · n` on the
/// positive, finite part of a curve `(n, d)`.
pub fn rate_fit(curve: &[(usize, f64)]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = curve.iter().filter(|(_, d)| *d > 0.0 && d.is_finite()).map(|(n, d)| (*n as f64, *d)).collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} positive points, at least {MIN_FIT_POINTS} needed",
            pts.len()
        )));
    }
    Ok(RateFit {
        primary: least_squares(DecayModel::StretchedCubeRoot, &pts),
        alternative: least_squares(DecayModel::Exponential, &pts),
        points_used: pts.len(),
    })
}
