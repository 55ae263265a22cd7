//! Evolving Suggested Matching (ESM) for edge-weighted online stochastic
//! matching under Poisson arrivals.
//!
//! The crate covers the whole pipeline: instance and kernel modelling
//! ([`instance`]), the Jaillet-Lu linear program ([`lp`]), arrival sampling
//! with extended online types ([`arrivals`]), the matching engines
//! ([`engines`]), Monte Carlo estimation ([`montecarlo`]), exact evaluation
//! of the analytic ratio bounds ([`ratiocalc`]) and the activation-function
//! search ([`search`]).

pub mod arrivals;
pub mod engines;
pub mod error;
pub mod files;
pub mod instance;
pub mod lp;
pub mod manifest;
pub mod montecarlo;
pub mod output;
pub mod ratiocalc;
pub mod rng;
pub mod search;

pub use error::{Error, Result};
pub use instance::{FractionalSolution, Graph, Instance, KernelInstance};
pub use ratiocalc::{PiecewiseConstantF, RatioReport};

/// Absolute tolerance for equality checks on instance data.
pub const TOL: f64 = 1e-9;

/// `1 - ln 2`, the largest first-class load an offline vertex can carry
/// under the Jaillet-Lu constraints.
pub fn y_star() -> f64 {
    1.0 - std::f64::consts::LN_2
}
