//! The three application models: a Lindley queue, SGLD on a stationary data
//! stream and random-coefficient linear systems.

pub mod linear;
pub mod queue;
pub mod sgld;

pub use linear::{linear_step, op_norm, LinearKernel, LinearModel, LinearParams};
pub use queue::{find_alpha_bar, lindley_step, AlphaBarChoice, InterArrival, QueueKernel, QueueModel, QueueParams};
pub use sgld::{sgld_step, Affine, Gradient, SgldKernel, SgldModel, SgldParams};
