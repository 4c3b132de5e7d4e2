//! Weighted Ornstein-Uhlenbeck operators on truncated Gaussian spaces.
//!
//! Moreau envelopes of convex weights ([`prox`]), grid and Monte Carlo
//! solvers for `lambda u - L u = f` ([`grid`], [`semigroup`]), Galerkin
//! truncation and mollification ([`galerkin`]), the Wiener-space example
//! weights ([`wiener`]) and a harness that checks the a priori estimates
//! ([`harness`]).

pub mod error;
pub mod functions;
pub mod galerkin;
pub mod grid;
pub mod harness;
pub mod prox;
pub mod quadrature;
pub mod rng;
pub mod sampling;
pub mod semigroup;
pub mod stats;
pub mod weight;
pub mod wiener;

pub use error::{Error, Result};
pub use functions::{FnRef, SmoothFn};
pub use stats::MCValue;
pub use weight::{ConvexWeight, WeightRef};
