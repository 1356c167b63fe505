use mcre_core::diagnostics::{lln_experiment, surrogate_reference, LlnPoint, LlnReport, Reference};
use mcre_core::{EnvProcess, RandomKernel, SeedStream};
use nalgebra::DVector;

use super::{build, log_plot, scalar_start, state_start, vector_start, write_plot, write_table, Built};
use crate::config::LlnConfig;
use crate::error::LabError;
use crate::Context;

/// A violated `|Φ| <= bound` is an assumption failure, not a config error.
fn phi_bound(e: mcre_core::Error) -> LabError {
    match e {
        mcre_core::Error::Validation(m) if m.contains("declared bound") => LabError::Assumption { assumption: "Phi bound".into(), detail: m },
        e => e.into(),
    }
}

fn experiment<K: RandomKernel>(
    kernel: &K,
    env: &EnvProcess,
    x0: &K::State,
    phi: &(dyn Fn(&K::State) -> f64 + Sync),
    exact: Option<f64>,
    l: &LlnConfig,
    stream: &SeedStream,
) -> Result<Vec<LlnReport>, LabError> {
    let bound = l.bound.unwrap_or_else(|| l.phi.natural_bound());
    let reference = match exact {
        Some(v) => Reference::Exact(v),
        None => surrogate_reference(kernel, env, x0, phi, bound, l.reference_steps, &stream.derive("reference")).map_err(phi_bound)?,
    };
    l.p.iter()
        .enumerate()
        .map(|(i, &p)| {
            lln_experiment(kernel, env, x0, phi, bound, std::slice::from_ref(x0), reference, &l.n_grid, l.reps, p, &stream.derive(&format!("p-{i}")))
                .map_err(phi_bound)
        })
        .collect()
}

pub fn run(ctx: &mut Context) -> Result<(), LabError> {
    let built = build(ctx)?;
    let l = ctx.config.lln.clone();
    let phi = l.phi;
    let stream = ctx.stream.clone();
    let norm = move |x: &DVector<f64>| phi.eval(x.norm());
    let reports = match &built {
        Built::Queue(q) => {
            let x0 = scalar_start(&l.start, 0.0, "lln.start")?;
            experiment(&q.kernel, &q.params.service, &x0, &|w: &f64| phi.eval(*w), None, &l, &stream)?
        }
        Built::Sgld(m) => {
            let x0 = vector_start(&l.start, DVector::zeros(m.params.dim), "lln.start")?;
            experiment(&m.kernel, &m.params.env, &x0, &norm, None, &l, &stream)?
        }
        Built::Linear(m) => {
            let x0 = vector_start(&l.start, DVector::zeros(m.kernel.dim()), "lln.start")?;
            experiment(&m.kernel, &m.params.env, &x0, &norm, None, &l, &stream)?
        }
        Built::Oracle(o) => {
            let x0 = state_start(&l.start, 0, o.size(), "lln.start")?;
            let exact = o.mu_star().iter().enumerate().map(|(i, m)| m * phi.eval(i as f64)).sum();
            experiment(o.kernel(), &o.env_process(), &x0, &|x: &usize| phi.eval(*x as f64), Some(exact), &l, &stream)?
        }
    };
    let mut rows: Vec<LlnPoint> = Vec::new();
    for r in &reports {
        let p = r.points[0].p;
        match r.reference {
            Reference::Exact(v) => ctx.report.constant("reference_exact", v),
            Reference::Surrogate { value, steps, burn_in } => {
                ctx.report.constant("reference_surrogate", value);
                ctx.report.constant("reference_steps", steps as f64);
                ctx.report.constant("reference_burn_in", burn_in as f64);
            }
        }
        let last = r.points.last().expect("non-empty grid");
        ctx.report.constant(&format!("error_final_p{p}"), last.error);
        let errors: Vec<String> = r.points.iter().map(|x| format!("{:.3e}", x.error)).collect();
        let detail = if r.decreasing { String::new() } else { format!("errors along the grid: {}", errors.join(", ")) };
        ctx.report.verdict(&format!("decreasing errors (p={p})"), r.decreasing, detail);
        rows.extend(r.points.iter().copied());
    }
    write_table(ctx, "lln.csv", &rows)?;
    let mut spec = log_plot("L^p error of ergodic averages", "lln.csv", "N", &["error"], None);
    spec.group_by = Some("p".into());
    write_plot(ctx, spec)?;
    Ok(())
}
