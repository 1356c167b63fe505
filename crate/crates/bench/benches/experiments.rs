use criterion::{criterion_group, criterion_main, Criterion};
use mcre_core::coupling::{coupling_prob_curve, SynchronousNoise};
use mcre_core::diagnostics::{lln_experiment, DiscreteOracle, Reference};
use mcre_core::env::{EnvProcess, FiniteMarkov};
use mcre_core::mcre::{gamma_bar_curve, DriftSpec, FiniteKernel};
use mcre_core::models::{InterArrival, QueueKernel};
use mcre_core::SeedStream;

fn desk_service() -> EnvProcess {
    EnvProcess::FiniteMarkov(FiniteMarkov::new(vec![0.1, 0.25], vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap())
}

fn oracle() -> DiscreteOracle {
    let kernel = FiniteKernel::new(vec![vec![vec![0.9, 0.1], vec![0.5, 0.5]], vec![vec![0.2, 0.8], vec![0.3, 0.7]]]).unwrap();
    DiscreteOracle::new(kernel, FiniteMarkov::labelled(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap()).unwrap()
}

fn experiments(c: &mut Criterion) {
    let mut g = c.benchmark_group("experiments");
    g.sample_size(10);
    let env = desk_service();
    let q = QueueKernel { interarrival: InterArrival::Exponential { rate: 2.0 } };
    let grid: Vec<usize> = vec![10, 50, 100, 200];
    g.bench_function("queue_coupling_curve_1e4", |b| {
        b.iter(|| coupling_prob_curve(&q, &SynchronousNoise, &0.0, &10.0, &env, &grid, 10_000, &SeedStream::new(3)).unwrap())
    });
    let drift = DriftSpec::new(|w: &f64| w.exp_m1(), |y| y.exp() * 2.0 / 3.0, |_| 0.25f64.exp());
    g.bench_function("gamma_bar_curve", |b| b.iter(|| gamma_bar_curve(&env, &drift, &[25, 50, 100], 2000, &SeedStream::new(4)).unwrap()));
    let o = oracle();
    g.bench_function("oracle_laws_200", |b| b.iter(|| o.laws(0, 200).unwrap()));
    let phi = |x: &usize| f64::from(*x == 0);
    let exact = Reference::Exact(o.mu_star()[0]);
    let env_o = o.env_process();
    g.bench_function("oracle_lln_400x16000", |b| {
        b.iter(|| lln_experiment(o.kernel(), &env_o, &0, &phi, 1.0, &[0, 1], exact, &[1000, 4000, 16000], 400, 2.0, &SeedStream::new(5)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, experiments);
criterion_main!(benches);
