//! Brownian bridges with random length and random pinning point: exact
//! simulation, Bayesian filtering of the length and the pin, pathwise local
//! time, and the compensators of the default indicator.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compensator;
pub mod distributions;
pub mod error;
pub mod kernels;
pub mod localtime;
pub mod inference;
pub mod pathsim;
pub mod suite;
pub mod surface;
pub mod verify;

pub use distributions::{LengthLaw, ModelSpec, PinningLaw};
pub use error::{Error, Result};
pub use kernels::QuadratureConfig;
