use mcre_core::mcre::{block_drift_check, drift_check, smallness_curve, GammaBarReport, SmallnessRule, VerifierRow};
use mcre_core::{DriftSpec, MinorSpec, SeedStream};
use nalgebra::DVector;

use super::{axis, build, env_probes, record_minorization, write_plot, write_table, Built};
use crate::error::LabError;
use crate::report::{plot, RunReport};
use crate::Context;

fn contractivity_rows(report: &mut RunReport, rows: &mut Vec<VerifierRow>, g: &GammaBarReport) {
    report.constant("gamma_bar", g.gamma_bar);
    report.constant("gamma_bar_ci_low", g.ci_low);
    report.constant("gamma_bar_ci_high", g.ci_high);
    let r = VerifierRow::from_curve("long-time contractivity", &g.points, 1.0, g.pass);
    report.verdict_rows("long-time contractivity", &r[r.len() - 1..]);
    rows.extend(r);
}

fn drift_rows(report: &mut RunReport, rows: &mut Vec<VerifierRow>, name: &str, drift: &[mcre_core::mcre::DriftReport]) {
    let r: Vec<VerifierRow> = drift.iter().map(|d| VerifierRow::from_drift(name, d)).collect();
    report.verdict_rows(name, &r);
    rows.extend(r);
}

fn smallness_rows<S>(
    ctx: &mut Context,
    rows: &mut Vec<VerifierRow>,
    env: &mcre_core::EnvProcess,
    minor: &MinorSpec<S>,
    stream: &SeedStream,
) -> Result<(), LabError> {
    let v = &ctx.config.verify;
    let s = smallness_curve(env, &*minor.log_mass_fn(), minor.theta(), &v.smallness_grid, v.smallness_reps, stream)?;
    let rule = match s.rule {
        SmallnessRule::BoundedAlpha => "finite environment support with alpha < 1 everywhere",
        SmallnessRule::Heuristic => "finite-horizon heuristic: non-increasing tail below 0.5",
    };
    ctx.report.notes.push(format!("smallness decided by {rule}"));
    ctx.report.verdict("smallness", s.pass, if s.pass { String::new() } else { format!("rule: {rule}") });
    rows.extend(s.points.iter().map(|p| VerifierRow {
        assumption: "smallness".into(),
        probe: format!("n={}", p.n),
        estimate: p.estimate,
        std_error: p.std_error,
        bound: 1.0,
        pass: s.pass,
    }));
    Ok(())
}

fn small_set_rows<S>(
    report: &mut RunReport,
    rows: &mut Vec<VerifierRow>,
    drift: &DriftSpec<S>,
    minor: &MinorSpec<S>,
    probes: &[S],
    ys: &[f64],
) -> Result<(), LabError> {
    let min_v = probes.iter().map(|x| drift.v(x)).fold(f64::INFINITY, f64::min);
    let mut r = Vec::with_capacity(ys.len());
    for &y in ys {
        let radius = minor.radius(drift, y)?;
        r.push(VerifierRow {
            assumption: "small set".into(),
            probe: format!("y={y}"),
            estimate: min_v,
            std_error: 0.0,
            bound: radius,
            pass: min_v <= radius,
        });
    }
    report.verdict_rows("small set", &r);
    rows.extend(r);
    Ok(())
}

pub fn run(ctx: &mut Context) -> Result<(), LabError> {
    let built = build(ctx)?;
    let v = ctx.config.verify.clone();
    let stream = ctx.stream.clone();
    let mut rows = Vec::new();
    match built {
        Built::Queue(q) => {
            if v.probes.iter().any(|w| *w < 0.0) {
                return Err(LabError::Config("queue probes are waiting times and must be non-negative".into()));
            }
            let env = q.params.service.clone();
            let ys = env_probes(&env, &stream.derive("probes"))?;
            let r = &mut ctx.report;
            r.constant("alpha_bar", q.alpha_bar);
            r.constant("laplace", q.laplace);
            r.constant("k", q.k);
            r.constant("tau", q.tau);
            r.constant("alpha_tau", q.alpha_tau());
            if let Some(s) = &q.alpha_search {
                r.constant("mean_increment", s.mean_increment);
                r.constant("mean_increment_se", s.mean_increment_se);
            }
            record_minorization(r, &q.drift, &q.minor, &ys)?;
            let probes: Vec<(f64, f64)> = ys.iter().flat_map(|&y| v.probes.iter().map(move |&w| (y, w))).collect();
            let d = drift_check(&q.kernel, &q.drift, &probes, v.reps, v.tolerance_se, &stream.derive("drift"))?;
            drift_rows(r, &mut rows, "drift", &d);
            contractivity_rows(r, &mut rows, &q.gamma_bar);
            smallness_rows(ctx, &mut rows, &env, &q.minor, &stream.derive("smallness"))?;
            small_set_rows(&mut ctx.report, &mut rows, &q.drift, &q.minor, &[0.0], &ys)?;
        }
        Built::Sgld(m) => {
            let env = m.params.env.clone();
            let ys = env_probes(&env, &stream.derive("probes"))?;
            let dim = m.params.dim;
            let r = &mut ctx.report;
            let c = &m.constants;
            for (name, value) in [("lambda", m.params.lambda), ("k1", c.k1), ("k2", c.k2), ("k3", c.k3), ("b", c.b), ("m", c.m)] {
                r.constant(name, value);
            }
            r.constant("gamma_min", m.gamma_min);
            if let Some(t) = m.target() {
                r.constant("target_mean", t.mean);
                r.constant("target_precision", t.precision);
            }
            r.verdict("dissipativity", true, "holds on the probe grid");
            r.verdict("growth bound", true, "holds on the probe grid");
            record_minorization(r, &m.drift, &m.minor, &ys)?;
            let thetas: Vec<DVector<f64>> =
                v.probes.iter().flat_map(|&p| if p == 0.0 { vec![axis(dim, 0.0)] } else { vec![axis(dim, p), axis(dim, -p)] }).collect();
            let probes: Vec<(f64, DVector<f64>)> = ys.iter().flat_map(|&y| thetas.iter().map(move |t| (y, t.clone()))).collect();
            let d = drift_check(&m.kernel, &m.drift, &probes, v.reps, v.tolerance_se, &stream.derive("drift"))?;
            drift_rows(r, &mut rows, "drift", &d);
            contractivity_rows(r, &mut rows, &m.gamma_bar);
            smallness_rows(ctx, &mut rows, &env, &m.minor, &stream.derive("smallness"))?;
            small_set_rows(&mut ctx.report, &mut rows, &m.drift, &m.minor, &[DVector::zeros(dim)], &ys)?;
        }
        Built::Linear(m) => {
            let r = &mut ctx.report;
            let s = m.stability;
            r.constant("m", m.m);
            r.constant("mean_noise_norm", m.mean_noise_norm);
            r.constant("k_raw", m.k_raw);
            r.constant("k", m.k_raw.max(1.0));
            r.constant("stability_mean", s.mean);
            r.constant("stability_ci_low", s.ci_low);
            r.constant("stability_ci_high", s.ci_high);
            let stab = VerifierRow {
                assumption: "random-coefficient stability".into(),
                probe: format!("p={}", m.params.p),
                estimate: s.mean,
                std_error: s.std_error,
                bound: 0.0,
                pass: s.ci_high < 0.0,
            };
            r.verdict_rows("random-coefficient stability", std::slice::from_ref(&stab));
            rows.push(stab);
            let blocks = super::contract::probe_blocks(&m.params.env, m.params.p, &stream.derive("blocks"))?;
            let dim = m.kernel.dim();
            let probes: Vec<(Vec<f64>, DVector<f64>)> =
                blocks.iter().flat_map(|b| v.probes.iter().map(move |&x| (b.clone(), axis(dim, x)))).collect();
            let d = block_drift_check(&m.multistep, &|x: &DVector<f64>| x.norm(), &probes, v.reps, v.tolerance_se, &stream.derive("drift"))?;
            drift_rows(r, &mut rows, "block drift", &d);
            contractivity_rows(r, &mut rows, &m.gamma_bar);
            r.notes.push(
                "linear models are certified through block drift, stability and shared-noise contraction; no minorization constants are derived, so smallness and small sets are not checked".into(),
            );
        }
        Built::Oracle(o) => {
            for (i, m) in o.mu_star().iter().enumerate() {
                ctx.report.constant(&format!("mu_star_{i}"), *m);
            }
            ctx.report.verdict("joint primitivity", true, "some power of the joint transition matrix is positive");
            ctx.report.notes.push("finite joint chain: convergence follows from primitivity; use the oracle command for exact laws".into());
        }
    }
    write_table(ctx, "verify.csv", &rows)?;
    write_plot(ctx, plot("Verifier estimates against bounds", "verify.csv", "probe", &["estimate", "bound"]))?;
    Ok(())
}
