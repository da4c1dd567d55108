//! Reinforced random walks and random walks in Dirichlet environment on
//! Galton-Watson trees: regime classification, speed formula evaluation
//! and exact path-identity oracles.

pub mod error;
pub mod rng;
pub mod scalar;
pub mod specfun;
pub mod branching;
pub mod dirichlet;
pub mod walk;
pub mod conductance;
pub mod criteria;
pub mod speed;
pub mod reversal;

pub use error::{Error, Result};
pub use scalar::Real;
pub use specfun::ParamSet;

/// Weight pair in double precision, the type used by the simulators.
pub type Params = ParamSet<f64>;
/// Single-precision weight pair.
pub type ParamsF32 = ParamSet<f32>;
