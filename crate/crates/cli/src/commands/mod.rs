//! Subcommand implementations.

use mcre_core::diagnostics::{rate_fit, RateFit};
use mcre_core::env::{sample_path, EnvProcess};
use mcre_core::models::{LinearModel, LinearParams, QueueModel, QueueParams, SgldModel, SgldParams};
use mcre_core::{DiscreteOracle, SeedStream};
use nalgebra::DVector;

use crate::config::{config_err, ExperimentConfig, ModelConfig};
use crate::error::LabError;
use crate::report::{plot, RunReport};
use crate::{Command, Context};

mod contract;
mod couple;
mod lln;
mod oracle;
mod verify;

pub fn run(command: Command, ctx: &mut Context) -> Result<(), LabError> {
    match command {
        Command::Verify => verify::run(ctx),
        Command::Couple => couple::run(ctx),
        Command::Lln => lln::run(ctx),
        Command::Contract => contract::run(ctx),
        Command::Oracle => oracle::run(ctx),
    }
}

/// A model built from the config, with its derived constants.
pub enum Built {
    Queue(QueueModel),
    Sgld(SgldModel),
    Linear(LinearModel),
    Oracle(DiscreteOracle),
}

fn build(ctx: &Context) -> Result<Built, LabError> {
    build_model(&ctx.config, &ctx.stream.derive("build"))
}

/// Builds the configured model, deriving its constants from `stream`.
pub fn build_model(cfg: &ExperimentConfig, stream: &SeedStream) -> Result<Built, LabError> {
    Ok(match &cfg.model {
        ModelConfig::Queue { interarrival, bound, theta, gamma_grid, gamma_reps, .. } => Built::Queue(QueueModel::build(
            QueueParams {
                service: cfg.environment.process()?,
                interarrival: interarrival.law(),
                bound: *bound,
                alpha_bar: cfg.model.alpha_choice()?,
                n_grid: gamma_grid.clone(),
                reps: *gamma_reps,
                theta: *theta,
            },
            stream,
        )?),
        ModelConfig::Sgld { lambda, dim, gradient, theta, gamma_grid, gamma_reps, .. } => Built::Sgld(SgldModel::build(
            SgldParams {
                lambda: *lambda,
                dim: *dim,
                gradient: gradient.gradient(),
                env: cfg.environment.process()?,
                overrides: cfg.model.overrides(),
                theta_probes: None,
                y_probes: None,
                n_grid: gamma_grid.clone(),
                reps: *gamma_reps,
                theta: *theta,
            },
            stream,
        )?),
        ModelConfig::Linear { a, b, noise_sd, p, gamma_grid, gamma_reps } => Built::Linear(LinearModel::build(
            LinearParams {
                a: a.iter().map(|m| m.matrix()).collect::<Result<_, _>>()?,
                b: b.iter().map(|m| m.matrix()).collect::<Result<_, _>>()?,
                noise_sd: *noise_sd,
                env: cfg.environment.process()?,
                p: *p,
                n_grid: gamma_grid.clone(),
                reps: *gamma_reps,
            },
            stream,
        )?),
        ModelConfig::Oracle { .. } => {
            Built::Oracle(DiscreteOracle::new(cfg.model.finite_kernel()?, cfg.environment.finite_markov()?).map_err(config_err)?)
        }
    })
}

/// Environment values to probe: the support when finite, else 21 points
/// across the range, else sampled stationary values.
pub fn env_probes(env: &EnvProcess, stream: &SeedStream) -> Result<Vec<f64>, LabError> {
    if let Some(s) = env.support() {
        return Ok(s);
    }
    if let Some((lo, hi)) = env.bounds() {
        return Ok((0..=20).map(|i| lo + (hi - lo) * i as f64 / 20.0).collect());
    }
    Ok(sample_path(env, 0, 20, &mut stream.rng(0))?.values().to_vec())
}

pub fn scalar_start(v: &Option<Vec<f64>>, default: f64, what: &str) -> Result<f64, LabError> {
    match v.as_deref() {
        None => Ok(default),
        Some([x]) => Ok(*x),
        Some(other) => Err(LabError::Config(format!("{what} must have one coordinate, got {other:?}"))),
    }
}

pub fn vector_start(v: &Option<Vec<f64>>, default: DVector<f64>, what: &str) -> Result<DVector<f64>, LabError> {
    match v {
        None => Ok(default),
        Some(x) if x.len() == default.len() => Ok(DVector::from_vec(x.clone())),
        Some(x) => Err(LabError::Config(format!("{what} must have {} coordinates, got {}", default.len(), x.len()))),
    }
}

pub fn state_start(v: &Option<Vec<f64>>, default: usize, size: usize, what: &str) -> Result<usize, LabError> {
    let x = scalar_start(v, default as f64, what)?;
    if x < 0.0 || x.fract() != 0.0 || x as usize >= size {
        return Err(LabError::Config(format!("{what} = {x} is not a state in 0..{size}")));
    }
    Ok(x as usize)
}

/// First unit vector scaled by `r`.
pub fn axis(dim: usize, r: f64) -> DVector<f64> {
    let mut v = DVector::zeros(dim);
    v[0] = r;
    v
}

/// Fits both decay models to a curve and records the result; too few positive
/// points only leave a note.
pub fn record_rate_fit(ctx: &mut Context, curve: &[(usize, f64)], csv: &str) -> Result<Option<RateFit>, LabError> {
    match rate_fit(curve) {
        Ok(fit) => {
            for f in [fit.primary, fit.alternative] {
                ctx.report.constant(&format!("rate_{}_c1", f.model.name()), f.c1);
                ctx.report.constant(&format!("rate_{}_c2", f.model.name()), f.c2);
                ctx.report.constant(&format!("rate_{}_r2", f.model.name()), f.r2);
            }
            let Context { out, report, .. } = ctx;
            out.write_csv(report, csv, &fit.rows())?;
            Ok(Some(fit))
        }
        Err(mcre_core::Error::InsufficientData(m)) => {
            ctx.report.notes.push(format!("no rate fit: {m}"));
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn write_table<R: mcre_core::report::CsvRecord>(ctx: &mut Context, name: &str, rows: &[R]) -> Result<(), LabError> {
    let Context { out, report, .. } = ctx;
    out.write_csv(report, name, rows)
}

pub fn write_plot(ctx: &Context, spec: crate::report::PlotSpec) -> Result<(), LabError> {
    ctx.out.write_plot(spec)
}

pub fn log_plot(title: &str, data: &str, x: &str, y: &[&str], band: Option<[&str; 2]>) -> crate::report::PlotSpec {
    let mut p = plot(title, data, x, y);
    p.log_y = true;
    p.band = band.map(|[a, b]| [a.to_string(), b.to_string()]);
    p
}

/// Records the log-mass range `ln(1 − α(y))` and small-set radii over `ys`.
pub fn record_minorization<S>(
    report: &mut RunReport,
    drift: &mcre_core::DriftSpec<S>,
    minor: &mcre_core::MinorSpec<S>,
    ys: &[f64],
) -> Result<(), LabError> {
    let mut r = (f64::INFINITY, f64::NEG_INFINITY);
    let mut lm = (f64::INFINITY, f64::NEG_INFINITY);
    for &y in ys {
        let radius = minor.radius(drift, y)?;
        let l = minor.log_mass(y);
        r = (r.0.min(radius), r.1.max(radius));
        lm = (lm.0.min(l), lm.1.max(l));
    }
    report.constant("epsilon", minor.epsilon());
    report.constant("radius_min", r.0);
    report.constant("radius_max", r.1);
    report.constant("log_one_minus_alpha_min", lm.0);
    report.constant("log_one_minus_alpha_max", lm.1);
    Ok(())
}
