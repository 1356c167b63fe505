use mcre_core::diagnostics::{tv_curve_discrete, tv_weights, TvTarget};

use super::{build, log_plot, record_rate_fit, write_plot, write_table, Built};
use crate::config::OracleTarget;
use crate::error::LabError;
use crate::Context;

pub fn run(ctx: &mut Context) -> Result<(), LabError> {
    let o = match build(ctx)? {
        Built::Oracle(o) => o,
        _ => return Err(mcre_core::Error::Unsupported("the oracle command needs a finite joint chain (model kind = \"oracle\")".into()).into()),
    };
    let c = ctx.config.oracle.clone();
    let size = o.size();
    for x in [c.x0, c.x1] {
        if x >= size {
            return Err(LabError::Config(format!("oracle start {x} is not a state in 0..{size}")));
        }
    }
    let target = match c.target {
        OracleTarget::Stationary => TvTarget::Stationary,
        OracleTarget::Start => TvTarget::Start(c.x1),
    };
    let tv = tv_curve_discrete(&o, c.x0, target, &c.n_grid, c.reps, &ctx.stream.derive("tv"))?;
    for (i, m) in o.mu_star().iter().enumerate() {
        ctx.report.constant(&format!("mu_star_{i}"), *m);
    }

    let n_max = c.n_grid.last().copied().unwrap_or(0);
    let mut worst: f64 = 0.0;
    for x in [c.x0, c.x1] {
        let e = o.exact(x, n_max)?;
        ctx.report.constant(&format!("tv_exact_final_x{x}"), e.tv);
        worst = worst.max(e.tv);
    }
    ctx.report.verdict(
        "exact convergence",
        worst < c.tolerance,
        if worst < c.tolerance { String::new() } else { format!("exact TV {worst} at n = {n_max} is not below {}", c.tolerance) },
    );
    let laws_a = o.laws(c.x0, n_max)?;
    let laws_b = o.laws(c.x1, n_max)?;
    let gap = tv_weights(&laws_a[n_max], &laws_b[n_max])?;
    ctx.report.constant("start_gap_final", gap);
    ctx.report.verdict(
        "start independence",
        gap < c.tolerance,
        if gap < c.tolerance { String::new() } else { format!("laws from {} and {} differ by {gap} at n = {n_max}", c.x0, c.x1) },
    );

    write_table(ctx, "tv_curve.csv", &tv)?;
    write_plot(ctx, log_plot("Total variation on the finite joint chain", "tv_curve.csv", "n", &["estimate", "exact_if_available"], Some(["ci_low", "ci_high"])))?;
    let exact: Vec<(usize, f64)> = tv.iter().filter_map(|p| p.exact.map(|e| (p.n, e))).collect();
    record_rate_fit(ctx, &exact, "rate_fit.csv")?;
    Ok(())
}
