use mcre_core::coupling::{coupling_prob_curve, CouplingPoint, CouplingStrategy, MaximalGaussian, SynchronousNoise};
use mcre_core::diagnostics::{tv_curve_discrete, TvTarget};
use mcre_core::{EnvProcess, RandomKernel, SeedStream};
use nalgebra::DVector;

use super::{axis, build, log_plot, record_rate_fit, scalar_start, state_start, vector_start, write_plot, write_table, Built};
use crate::config::StrategyConfig;
use crate::error::LabError;
use crate::Context;

#[allow(clippy::too_many_arguments)]
fn curve<K, C>(
    kernel: &K,
    strategy: &C,
    x1: &K::State,
    x2: &K::State,
    env: &EnvProcess,
    grid: &[usize],
    reps: usize,
    stream: &SeedStream,
) -> Result<Vec<CouplingPoint>, LabError>
where
    K: RandomKernel,
    C: CouplingStrategy<K> + ?Sized,
{
    Ok(coupling_prob_curve(kernel, strategy, x1, x2, env, grid, reps, &stream.derive("coupling"))?)
}

fn unsupported(model: &str, s: StrategyConfig) -> LabError {
    LabError::Config(format!("coupling strategy {s:?} is not available for the {model} model"))
}

pub fn run(ctx: &mut Context) -> Result<(), LabError> {
    let built = build(ctx)?;
    let c = ctx.config.couple.clone();
    let stream = ctx.stream.clone();
    let (points, strategy) = match &built {
        Built::Queue(q) => {
            let x1 = scalar_start(&c.x1, 0.0, "couple.x1")?;
            let x2 = scalar_start(&c.x2, 10.0, "couple.x2")?;
            if x1 < 0.0 || x2 < 0.0 {
                return Err(LabError::Config("queue starts are waiting times and must be non-negative".into()));
            }
            let env = &q.params.service;
            match c.strategy.unwrap_or(StrategyConfig::Synchronous) {
                StrategyConfig::Synchronous => (curve(&q.kernel, &SynchronousNoise, &x1, &x2, env, &c.n_grid, c.reps, &stream)?, "synchronous"),
                StrategyConfig::Split => (curve(&q.kernel, &q.split_coupling(), &x1, &x2, env, &c.n_grid, c.reps, &stream)?, "split"),
                s => return Err(unsupported("queue", s)),
            }
        }
        Built::Sgld(m) => {
            let dim = m.params.dim;
            let x1 = vector_start(&c.x1, DVector::zeros(dim), "couple.x1")?;
            let x2 = vector_start(&c.x2, axis(dim, 5.0), "couple.x2")?;
            let env = &m.params.env;
            match c.strategy.unwrap_or(StrategyConfig::MaximalGaussian) {
                StrategyConfig::MaximalGaussian => {
                    (curve(&m.kernel, &MaximalGaussian, &x1, &x2, env, &c.n_grid, c.reps, &stream)?, "maximal_gaussian")
                }
                StrategyConfig::Synchronous => (curve(&m.kernel, &SynchronousNoise, &x1, &x2, env, &c.n_grid, c.reps, &stream)?, "synchronous"),
                s => return Err(unsupported("sgld", s)),
            }
        }
        Built::Oracle(o) => {
            let size = o.size();
            let x1 = state_start(&c.x1, 0, size, "couple.x1")?;
            let x2 = state_start(&c.x2, 1, size, "couple.x2")?;
            match c.strategy.unwrap_or(StrategyConfig::Synchronous) {
                StrategyConfig::Synchronous => {
                    (curve(o.kernel(), &SynchronousNoise, &x1, &x2, &o.env_process(), &c.n_grid, c.reps, &stream)?, "synchronous")
                }
                s => return Err(unsupported("oracle", s)),
            }
        }
        Built::Linear(_) => {
            return Err(mcre_core::Error::Unsupported(
                "continuous linear models have no coalescing coupling; use the contract command for shared-noise contraction".into(),
            )
            .into())
        }
    };
    ctx.report.notes.push(format!("coupling strategy: {strategy}"));
    write_table(ctx, "coupling.csv", &points)?;
    write_plot(ctx, log_plot("Coupling bound on total variation", "coupling.csv", "n", &["tv_bound"], Some(["ci_low", "ci_high"])))?;
    if let Some(last) = points.last() {
        ctx.report.constant("tv_bound_final", last.tv_bound);
        ctx.report.constant("not_coupled_final_ci_high", last.ci_high);
    }
    let positive: Vec<(usize, f64)> = points.iter().filter(|p| p.n > 0).map(|p| (p.n, p.tv_bound)).collect();
    record_rate_fit(ctx, &positive, "rate_fit.csv")?;

    if let Built::Oracle(o) = &built {
        let size = o.size();
        let x1 = state_start(&c.x1, 0, size, "couple.x1")?;
        let x2 = state_start(&c.x2, 1, size, "couple.x2")?;
        let tv = tv_curve_discrete(o, x1, TvTarget::Start(x2), &c.n_grid, c.reps, &stream.derive("tv"))?;
        let violations: Vec<String> = points
            .iter()
            .zip(&tv)
            .filter(|(p, t)| t.exact.unwrap_or(0.0) > 2.0 * p.ci_high + 1e-12)
            .map(|(p, _)| format!("n={}", p.n))
            .collect();
        let detail = if violations.is_empty() { String::new() } else { format!("exact TV above the bound at {}", violations.join(", ")) };
        ctx.report.verdict("coupling inequality", violations.is_empty(), detail);
        write_table(ctx, "tv_curve.csv", &tv)?;
        write_plot(ctx, log_plot("Exact and empirical TV between starts", "tv_curve.csv", "n", &["estimate", "exact_if_available"], None))?;
    }
    Ok(())
}
