//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.
//! Runs without the libtest harness so every line prints even after a failure.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use mcre_core::coupling::{coupled_endpoints, coupling_prob_curve, CouplingStrategy, MaximalGaussian, SynchronousNoise};
use mcre_core::diagnostics::{empirical_law, lln_experiment, rate_fit, Reference};
use mcre_core::models::linear::shared_noise_differences;
use mcre_core::stats::{ks_two_sample, mean, variance};
use mcre_core::env::sample_path;
use mcre_core::mcre::RandomKernel;
use mcre_core::{EnvProcess, SeedStream};
use mcre_lab::commands::{build_model, Built};
use mcre_lab::config::{self, ModelConfig};
use mcre_lab::{execute, Command, CommonArgs, ExperimentConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn load(name: &str) -> ExperimentConfig {
    config::load(&configs().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn built(cfg: &ExperimentConfig) -> Built {
    build_model(cfg, &SeedStream::new(cfg.seed.unwrap_or(0)).derive("build")).unwrap_or_else(|e| panic!("build: {e}"))
}

fn queue() -> mcre_core::QueueModel {
    match built(&load("queue_desk.toml")) {
        Built::Queue(q) => q,
        _ => unreachable!("queue config"),
    }
}

fn sgld_with(lambda: Option<f64>) -> mcre_core::SgldModel {
    let mut cfg = load("sgld_desk.toml");
    if let (Some(l), ModelConfig::Sgld { lambda, .. }) = (lambda, &mut cfg.model) {
        *lambda = l;
    }
    match built(&cfg) {
        Built::Sgld(m) => m,
        _ => unreachable!("sgld config"),
    }
}

fn linear() -> mcre_core::LinearModel {
    match built(&load("linear_switching.toml")) {
        Built::Linear(m) => m,
        _ => unreachable!("linear config"),
    }
}

fn oracle() -> mcre_core::DiscreteOracle {
    match built(&load("oracle.toml")) {
        Built::Oracle(o) => o,
        _ => unreachable!("oracle config"),
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let o = oracle();
    let mut worst: f64 = 0.0;
    for x0 in 0..o.size() {
        worst = worst.max(o.exact(x0, 200).map_err(|e| e.to_string())?.tv);
    }
    let a = o.laws(0, 200).map_err(|e| e.to_string())?;
    let b = o.laws(1, 200).map_err(|e| e.to_string())?;
    let gap = a[200].iter().zip(&b[200]).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    check(worst < 1e-8 && gap < 1e-10, format!("max exact TV at n=200 {worst:.3e}, start gap {gap:.3e}"))
}

fn marginal_pvalues<K, C>(kernel: &K, strategy: &C, env: &EnvProcess, x1: K::State, x2: K::State, coord: impl Fn(&K::State) -> f64, seed: u64) -> Result<Vec<f64>, String>
where
    K: RandomKernel,
    C: CouplingStrategy<K>,
{
    let mut ps = Vec::new();
    for n in [10, 100] {
        let pairs = coupled_endpoints(kernel, strategy, &x1, &x2, env, n, 10_000, &SeedStream::new(seed)).map_err(|e| e.to_string())?;
        for (which, start) in [(0u64, &x1), (1, &x2)] {
            let coupled: Vec<f64> = pairs.iter().map(|s| coord(if which == 0 { &s.x1 } else { &s.x2 })).collect();
            let fresh: Vec<f64> = empirical_law(kernel, env, start, n, 10_000, &SeedStream::new(seed + 1 + which))
                .map_err(|e| e.to_string())?
                .iter()
                .map(&coord)
                .collect();
            ps.push(ks_two_sample(&coupled, &fresh).1);
        }
    }
    Ok(ps)
}

fn criterion_2() -> Outcome {
    let q = queue();
    let mut ps = marginal_pvalues(&q.kernel, &SynchronousNoise, &q.params.service, 0.0, 10.0, |w| *w, 2001)?;
    let s = sgld_with(None);
    let e1 = DVector::from_vec(vec![5.0]);
    ps.extend(marginal_pvalues(&s.kernel, &MaximalGaussian, &s.params.env, DVector::zeros(1), e1, |t| t[0], 2002)?);
    let min = ps.iter().copied().fold(1.0, f64::min);
    check(min > 0.01, format!("min KS p-value {min:.4} over {} comparisons", ps.len()))
}

fn criterion_3() -> Outcome {
    let q = queue();
    let grid: Vec<usize> = (1..=200).collect();
    let curve = coupling_prob_curve(&q.kernel, &SynchronousNoise, &0.0, &10.0, &q.params.service, &grid, 10_000, &SeedStream::new(3003))
        .map_err(|e| e.to_string())?;
    let bound = curve.last().expect("grid").tv_bound;
    let fit = rate_fit(&curve.iter().map(|p| (p.n, p.tv_bound)).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
    let fits = [fit.primary, fit.alternative];
    let good = fits.iter().any(|f| f.c2 > 0.0 && f.r2 >= 0.9);
    let desc: Vec<String> = fits.iter().map(|f| format!("{}: c2 {:.4}, R2 {:.4}", f.model.name(), f.c2, f.r2)).collect();
    check(bound < 0.05 && good, format!("TV bound at n=200 {bound:.4}; {}", desc.join("; ")))
}

fn criterion_4() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str| {
        let args = CommonArgs {
            config: Some(configs().join(name)),
            seed: None,
            out: Some(dir.path().join(name.replace('/', "_"))),
            threads: None,
            emit_plots: false,
        };
        execute(Command::Verify, &args)
    };
    let mut bad = Vec::new();
    for name in ["queue_desk.toml", "sgld_desk.toml", "linear_switching.toml"] {
        if let Err(e) = run(name) {
            bad.push(format!("{name}: {e}"));
        }
    }
    for name in ["counterexamples/queue_unstable.toml", "counterexamples/sgld_large_step.toml", "counterexamples/linear_identity.toml"] {
        match run(name) {
            Err(e) if e.exit_code() == 1 => {}
            Err(e) => bad.push(format!("{name}: exit {} ({e})", e.exit_code())),
            Ok(_) => bad.push(format!("{name}: passed")),
        }
    }
    check(bad.is_empty(), if bad.is_empty() { "3 desk instances pass, 3 counterexamples exit 1".into() } else { bad.join("; ") })
}

/// Absolute deviations of the sample mean and relative deviation of the
/// sample variance from the Gaussian target after burn-in plus 1e4 steps.
fn sgld_deviation(lambda: f64) -> Result<(f64, f64, f64, f64), String> {
    let m = sgld_with(Some(lambda));
    let target = m.target().ok_or("quadratic target")?;
    let burn_in = (10.0 / lambda).ceil() as usize;
    let xs = empirical_law(&m.kernel, &m.params.env, &DVector::zeros(1), burn_in + 10_000, 10_000, &SeedStream::new(5005))
        .map_err(|e| e.to_string())?;
    let v: Vec<f64> = xs.iter().map(|x| x[0]).collect();
    let (mu, var) = (mean(&v), variance(&v));
    let target_var = 1.0 / target.precision;
    Ok(((mu - target.mean).abs(), (var - target_var).abs() / target_var, mu, var))
}

fn criterion_5() -> Outcome {
    let (dm1, dv1, mu1, var1) = sgld_deviation(0.01)?;
    let (dm2, dv2, mu2, var2) = sgld_deviation(0.0025)?;
    let ok = dm1 < 0.05 && dv1 < 0.1 && dm2 <= dm1 && dv2 <= dv1;
    check(
        ok,
        format!("lambda 0.01: mean {mu1:.4}, variance {var1:.4}; lambda 0.0025: mean {mu2:.4}, variance {var2:.4}; target variance 2"),
    )
}

fn criterion_6() -> Outcome {
    let o = oracle();
    let phi = |x: &usize| f64::from(*x == 0);
    let exact = o.mu_star()[0];
    let r = lln_experiment(o.kernel(), &o.env_process(), &0, &phi, 1.0, &[0, 1], Reference::Exact(exact), &[1000, 4000, 16000], 400, 2.0, &SeedStream::new(6006))
        .map_err(|e| e.to_string())?;
    let e: Vec<f64> = r.points.iter().map(|p| p.error).collect();
    let ok = e.windows(2).all(|w| w[1] <= 0.75 * w[0]) && e[2] < 0.01;
    check(ok, format!("L2 errors {:.5} {:.5} {:.5}", e[0], e[1], e[2]))
}

fn criterion_7() -> Outcome {
    let m = linear();
    let x = DVector::from_vec(vec![1.0, -2.0]);
    let x2 = DVector::from_vec(vec![0.5, 3.0]);
    let d0 = (&x - &x2).norm();
    let stream = SeedStream::new(7007);
    let mut worst: f64 = 0.0;
    for r in 0..100 {
        let path = sample_path(&m.params.env, 0, 39, &mut stream.derive("env").rng(r)).map_err(|e| e.to_string())?;
        let diffs = shared_noise_differences(&m.kernel, &x, &x2, &path, &mut stream.derive("chain").rng(r)).map_err(|e| e.to_string())?;
        for k in 0..=20 {
            worst = worst.max((diffs[2 * k].norm() - 0.6f64.powi(k as i32) * d0).abs());
        }
    }
    let s = m.stability;
    check(worst <= 1e-10 && s.ci_high < 0.0, format!("max |norm - 0.6^k d0| {worst:.2e}; stability CI [{:.4}, {:.4}]", s.ci_low, s.ci_high))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

/// Largest singular value of a 2x2 matrix in closed form.
fn sigma_max(a: &DMatrix<f64>) -> f64 {
    let f = a.iter().map(|v| v * v).sum::<f64>();
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    ((f + (f * f - 4.0 * det * det).max(0.0).sqrt()) / 2.0).sqrt()
}

fn criterion_8() -> Outcome {
    let mut rng = SeedStream::new(8008).rng(0);
    let mut bad = Vec::new();

    let q = queue();
    let (a, m_bound) = (q.alpha_bar, q.params.bound);
    let gb = q.gamma_bar.gamma_bar;
    let eps = (1.0 / gb.sqrt() - 1.0) / 2.0;
    if !close(q.epsilon, eps) || !close(q.minor.epsilon(), eps) {
        bad.push("queue epsilon".to_string());
    }
    if !close(q.tau, m_bound + 4.0 / (1.0 / gb.sqrt() - 1.0)) {
        bad.push("queue tau".to_string());
    }
    for _ in 0..100 {
        let y = rng.random::<f64>() * m_bound;
        let gamma = (a * y).exp() * 2.0 / (2.0 + a);
        let k = (a * m_bound).exp();
        let r = 2.0 * k / (eps * gamma);
        if !close(q.gamma(y), gamma) || !close(q.drift.k(y), k) || !close(q.minor.radius(&q.drift, y).map_err(|e| e.to_string())?, r) {
            bad.push(format!("queue at y = {y}"));
            break;
        }
    }

    let s = sgld_with(None);
    let (l, c, d) = (s.params.lambda, s.constants, s.params.dim as f64);
    let eps = (1.0 / s.gamma_bar.gamma_bar.sqrt() - 1.0) / 2.0;
    if !close(s.epsilon, eps) {
        bad.push("sgld epsilon".to_string());
    }
    for _ in 0..100 {
        let y = 0.4 + 0.2 * rng.random::<f64>();
        let gamma = 1.0 + 3.0 * l * l * c.k1 * c.k1 - 2.0 * l * y;
        let k = (l * (d + 2.0 * c.b) + 3.0 * l * l * c.k3 * c.k3 + 3.0 * l * l * c.k2 * c.k2 * y * y).max(1.0);
        let r = 2.0 * k / (eps * gamma);
        if !close(s.drift.gamma(y), gamma) || !close(s.drift.k(y), k) || !close(s.minor.radius(&s.drift, y).map_err(|e| e.to_string())?, r) {
            bad.push(format!("sgld at y = {y}"));
            break;
        }
    }

    let lin = linear();
    let big_m = lin.params.a.iter().chain(&lin.params.b).map(sigma_max).fold(1.0, f64::max);
    let k = (lin.params.p as f64 * big_m.powi(lin.params.p as i32) * (std::f64::consts::PI / 2.0).sqrt() * lin.params.noise_sd).max(1.0);
    if !close(lin.multistep.drift().k, k) {
        bad.push(format!("linear K {} vs {k}", lin.multistep.drift().k));
    }
    for _ in 0..100 {
        let block: Vec<f64> = (0..lin.params.p).map(|_| f64::from(rng.random::<bool>())).collect();
        let mut prod = DMatrix::identity(2, 2);
        for &y in &block {
            prod = &lin.params.a[y as usize] * prod;
        }
        if !close(lin.multistep.block_gamma(&block), sigma_max(&prod)) {
            bad.push(format!("linear block gamma at {block:?}"));
            break;
        }
    }
    check(bad.is_empty(), if bad.is_empty() { "gamma, K, R, epsilon, tau agree on 100 probes per model".into() } else { bad.join("; ") })
}

fn main() {
    let criteria: [(fn() -> Outcome, Duration); 8] = [
        (criterion_1, Duration::from_secs(1)),
        (criterion_2, Duration::from_secs(60)),
        (criterion_3, Duration::from_secs(120)),
        (criterion_4, Duration::from_secs(120)),
        (criterion_5, Duration::from_secs(300)),
        (criterion_6, Duration::from_secs(60)),
        (criterion_7, Duration::from_secs(10)),
        (criterion_8, Duration::from_secs(1)),
    ];
    let mut failed = 0;
    for (i, (run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if took <= *limit => (true, d),
            Ok(d) => (false, format!("{d}; runtime over {}s", limit.as_secs())),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {}: {} ({detail}; {:.2}s)", i + 1, if pass { "PASS" } else { "FAIL" }, took.as_secs_f64());
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
