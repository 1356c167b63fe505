//! Simulation and verification of Markov chains in stationary random
//! environments: `X_{t+1} ~ Q(Y_t, X_t, ·)` with `Y` a stationary process.
//!
//! The crate provides environment processes ([`env`]), kernels with drift and
//! minorization data plus their Monte-Carlo verifiers ([`mcre`]), couplings
//! of two copies of a chain ([`coupling`]), three application models
//! ([`models`]) and convergence diagnostics including an exact finite-state
//! oracle ([`diagnostics`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod coupling;
pub mod diagnostics;
pub mod env;
pub mod error;
pub mod mcre;
pub mod models;
pub mod report;
pub mod rng;
pub mod stats;

pub use diagnostics::DiscreteOracle;
pub use env::{EnvPath, EnvProcess, FiniteMarkov, Marginal, MovingAverage};
pub use error::{Error, Result};
pub use mcre::{DriftSpec, FiniteKernel, MinorSpec, MultistepKernel, RandomKernel, StateSpace};
pub use rng::{SeedStream, SimRng};
pub use models::{LinearModel, QueueModel, SgldModel};
