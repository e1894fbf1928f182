//! Simulation and verification of cooperative consensus (first-order) and
//! flocking (second-order) dynamics whose communication links fail
//! intermittently but keep a minimum level of service.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: kernels, scalings, system parameters and states.
//! * [`schedule`]: link-weight signals and the PE / ISC validators.
//! * [`dynamics`]: right-hand sides of the two systems.
//! * [`integrate`]: switch-aligned fixed-step RK4.
//! * [`metrics`]: diameters, extrema and projections.
//! * [`theory`]: closed-form rates, barriers and the flocking criterion.
//! * [`experiment`]: JSON-configured runs and verification reports.

pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod integrate;
pub mod metrics;
pub mod model;
pub mod output;
pub mod quadrature;
pub mod schedule;
pub mod theory;

pub use error::{Error, Result};
