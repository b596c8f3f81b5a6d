//! Linear-quadratic pursuit-evasion differential games under the
//! disturbance-attenuation approach with measurement feedback.
//!
//! The library covers two scenarios: a scalar boat pursuit problem with
//! closed-form solutions, and a planar missile guidance engagement studied
//! by seeded Monte Carlo. Shared machinery includes backward/forward matrix
//! Riccati integration, the game estimator and its Kalman and H-infinity
//! realizations, the Omega existence monitor, and critical attenuation-level
//! search.

pub mod cli;
pub mod error;
pub mod estimator;
pub mod feasibility;
pub mod guidance;
pub mod mge;
pub mod model;
pub mod riccati;
pub mod sbgp;
pub mod sim;

pub use error::{Error, Result};
pub use model::{GameModel, ObservationMap, StateVector, TimeGrid};
pub use riccati::{solve_x, solve_y, RiccatiSolution};
