mod common;

use std::sync::Arc;

use mcre_core::env::{EnvProcess, Marginal};
use mcre_core::mcre::{
    block_drift_check, choose_epsilon, drift_check, gamma_bar_curve, multistep_wrap, small_set_radius, BlockDrift, DriftSpec,
    RandomKernel,
};
use mcre_core::models::QueueKernel;
use mcre_core::models::InterArrival;
use mcre_core::SeedStream;
use nalgebra::DVector;
use proptest::prelude::*;

/// `E[V((w + y − ε)₊)]` for `V(w) = e^w − 1`, `ε ~ Exp(2)`.
fn queue_lyapunov_mean(w: f64, y: f64) -> f64 {
    let a = w + y;
    (-2.0 * a).exp() + 2.0 * a.exp() * (1.0 - (-3.0 * a).exp()) / 3.0 - 1.0
}

fn queue_drift() -> DriftSpec<f64> {
    DriftSpec::new(|w: &f64| w.exp_m1(), |y| y.exp() * 2.0 / 3.0, |_| 0.25f64.exp())
}

#[test]
fn queue_drift_probe_passes_against_closed_form() {
    let kernel = QueueKernel { interarrival: InterArrival::Exponential { rate: 2.0 } };
    let drift = queue_drift();
    let r = drift_check(&kernel, &drift, &[(0.25, 1.0)], 100_000, 3.0, &SeedStream::new(200)).unwrap();
    let bound = 0.25f64.exp() * (2.0 / 3.0) * (1f64.exp() - 1.0) + 0.25f64.exp();
    assert!((r[0].bound - bound).abs() < 1e-12);
    assert!(r[0].pass);
    assert!((r[0].estimate - queue_lyapunov_mean(1.0, 0.25)).abs() < 4.0 * r[0].std_error);
}

#[test]
fn drift_estimates_cover_closed_form() {
    let kernel = QueueKernel { interarrival: InterArrival::Exponential { rate: 2.0 } };
    let drift = queue_drift();
    let exact = queue_lyapunov_mean(0.5, 0.1);
    let covered = (0..100)
        .filter(|&i| {
            let r = drift_check(&kernel, &drift, &[(0.1, 0.5)], 2000, 3.0, &SeedStream::new(1000 + i)).unwrap();
            (r[0].estimate - exact).abs() <= 4.0 * r[0].std_error
        })
        .count();
    assert!(covered >= 99, "{covered} of 100");
}

#[test]
fn gamma_bar_constant_environment_example() {
    let env = EnvProcess::Iid(Marginal::Constant(0.0));
    let drift = DriftSpec::<f64>::new(|x| *x, |_| 0.9, |_| 2.0);
    let r = gamma_bar_curve(&env, &drift, &[100], 1000, &SeedStream::new(201)).unwrap();
    assert!((r.gamma_bar - 0.9 * 2f64.powf(0.01)).abs() < 1e-12);
    assert!((r.gamma_bar - 0.9063).abs() < 1e-4);
}

#[test]
fn gamma_bar_iid_two_point() {
    let env = EnvProcess::Iid(Marginal::Discrete { values: vec![0.0, 1.0], probs: vec![2.0 / 3.0, 1.0 / 3.0] });
    let drift = DriftSpec::<f64>::new(|x| *x, |y| if y == 0.0 { 1.2 } else { 0.5 }, |_| 1.0);
    let r = gamma_bar_curve(&env, &drift, &[1, 5, 20], 200_000, &SeedStream::new(202)).unwrap();
    let exact = 1.2 * 2.0 / 3.0 + 0.5 / 3.0;
    for p in &r.points {
        assert!((p.estimate - exact).abs() < 0.01, "n = {}: {}", p.n, p.estimate);
    }
    assert!(r.pass);
}

#[test]
fn queue_small_set_radius_example() {
    let d = DriftSpec::<f64>::new(|w: &f64| w.exp_m1(), |y| y.exp() * 2.0 / 3.0, |_| 0.25f64.exp());
    let r = small_set_radius(&d, 0.04, 0.25).unwrap();
    assert!((r - 2.0 * 0.25f64.exp() / (0.04 * d.gamma(0.25))).abs() < 1e-12);
    assert!((r - 75.0).abs() < 0.1);
    assert!((choose_epsilon(0.856).unwrap() - 0.0405).abs() < 1e-3);
}

proptest! {
    #[test]
    fn epsilon_inside_open_interval(g in 1e-6f64..0.999_999) {
        let e = choose_epsilon(g).unwrap();
        prop_assert!(e > 0.0 && e < 1.0 / g.sqrt() - 1.0);
    }
}

#[test]
fn oracle_block_matrix_is_matrix_product() {
    let o = common::oracle();
    let kernel = o.kernel().clone();
    let q = kernel.matrices().to_vec();
    let wrapped = multistep_wrap(kernel, 2, BlockDrift { gamma: Arc::new(|_| 0.5), k: 1.0, one_step_k: 1.0 }).unwrap();
    for (a, b) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)] {
        let m = wrapped.block_matrix(&[a as f64, b as f64]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let direct = q[a][i][0] * q[b][0][j] + q[a][i][1] * q[b][1][j];
                assert!((m[i][j] - direct).abs() < 1e-12);
            }
        }
        let stream = SeedStream::new(203);
        let hits = (0..100_000u64).filter(|&r| wrapped.step_block(&[a as f64, b as f64], &0, &mut stream.rng(r)).unwrap() == 1).count();
        assert!((hits as f64 / 1e5 - m[0][1]).abs() < 0.005);
    }
}

#[test]
fn single_step_wrap_is_base_step() {
    let kernel = QueueKernel { interarrival: InterArrival::Exponential { rate: 2.0 } };
    let wrapped = multistep_wrap(kernel.clone(), 1, BlockDrift { gamma: Arc::new(|_| 0.5), k: 1.0, one_step_k: 1.0 }).unwrap();
    let s = SeedStream::new(204);
    for r in 0..100 {
        assert_eq!(wrapped.step_block(&[0.2], &1.5, &mut s.rng(r)).unwrap(), kernel.step(0.2, &1.5, &mut s.rng(r)));
    }
}

#[test]
fn linear_block_drift_holds() {
    let m = common::switching_linear();
    let probes: Vec<(Vec<f64>, DVector<f64>)> = [[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
        .iter()
        .flat_map(|b| [0.0, 1.0, 10.0].map(|r| (b.to_vec(), DVector::from_vec(vec![r, -r]))))
        .collect();
    let reports = block_drift_check(&m.multistep, &|x: &DVector<f64>| x.norm(), &probes, 5000, 3.0, &SeedStream::new(205)).unwrap();
    assert!(reports.iter().all(|r| r.pass), "{reports:?}");
}
