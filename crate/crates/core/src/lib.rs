//! Simulation and limit-verification laboratory for many-server queues in
//! which each customer's patience is its service requirement divided by a
//! constant (`T = S / theta`).
//!
//! * [`model`]: parameters, primitive sampling and path scalings.
//! * [`des`]: the event-exact simulator and steady-state sampling.
//! * [`coupling`]: pathwise couplings and stochastic-order checks.
//! * [`limits`]: diffusion and lower-order fluid limit objects.
//! * [`harness`]: n-sweeps that confront simulation with the limits.

pub mod coupling;
pub mod des;
pub mod error;
pub mod harness;
pub mod limits;
pub mod model;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use model::{make_params, CorrelationMode, ModelParams};
pub use rng::{SeedSpec, StreamKey};
