#![allow(dead_code)]

use mcre_core::diagnostics::DiscreteOracle;
use mcre_core::env::{EnvProcess, FiniteMarkov, Marginal};
use mcre_core::mcre::FiniteKernel;
use mcre_core::models::linear::rotation_scaling;
use mcre_core::models::{AlphaBarChoice, Affine, Gradient, InterArrival, LinearModel, LinearParams, QueueModel, QueueParams, SgldModel, SgldParams};
use mcre_core::models::sgld::SgldOverrides;
use mcre_core::SeedStream;
use nalgebra::DMatrix;

pub fn oracle() -> DiscreteOracle {
    let kernel = FiniteKernel::new(vec![vec![vec![0.9, 0.1], vec![0.5, 0.5]], vec![vec![0.2, 0.8], vec![0.3, 0.7]]]).unwrap();
    DiscreteOracle::new(kernel, FiniteMarkov::labelled(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap()).unwrap()
}

pub fn desk_service() -> EnvProcess {
    EnvProcess::FiniteMarkov(FiniteMarkov::new(vec![0.1, 0.25], vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap())
}

pub fn desk_queue() -> QueueModel {
    QueueModel::build(
        QueueParams {
            service: desk_service(),
            interarrival: InterArrival::Exponential { rate: 2.0 },
            bound: 0.25,
            alpha_bar: AlphaBarChoice::Fixed(1.0),
            n_grid: vec![25, 50, 100],
            reps: 2000,
            theta: 0.5,
        },
        &SeedStream::new(7),
    )
    .unwrap()
}

pub fn two_point_delta() -> EnvProcess {
    EnvProcess::Iid(Marginal::Discrete { values: vec![0.4, 0.6], probs: vec![0.5, 0.5] })
}

pub fn quadratic_sgld(lambda: f64) -> SgldModel {
    SgldModel::build(
        SgldParams {
            lambda,
            dim: 1,
            gradient: Gradient::Quadratic { delta: Affine { scale: 1.0, offset: 0.0 }, shift: Affine::ZERO },
            env: two_point_delta(),
            overrides: SgldOverrides::default(),
            theta_probes: None,
            y_probes: None,
            n_grid: vec![25, 50, 100],
            reps: 2000,
            theta: 0.5,
        },
        &SeedStream::new(8),
    )
    .unwrap()
}

pub fn a0() -> DMatrix<f64> {
    rotation_scaling(90.0, 1.5, 0.4)
}

pub fn switching_linear() -> LinearModel {
    LinearModel::build(
        LinearParams {
            a: vec![a0(), -a0()],
            b: vec![DMatrix::identity(2, 2)],
            noise_sd: 1.0,
            env: EnvProcess::FiniteMarkov(FiniteMarkov::labelled(vec![vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap()),
            p: 2,
            n_grid: vec![10, 20, 40],
            reps: 2000,
        },
        &SeedStream::new(9),
    )
    .unwrap()
}
