//! Simulation and estimation toolkit for a linear single-track vehicle whose
//! tires are modeled as transport equations along the contact patch.
//!
//! The crate simulates the coupled ODE-PDE plant, synthesizes an
//! inverse-dynamics output-injection observer in the frequency domain, and
//! reconstructs sideslip angle, tire forces and the distributed tire
//! deformation from yaw-rate and lateral-acceleration measurements alone.

pub mod acceptance;
pub mod error;
pub mod freq;
pub mod kernel;
pub mod lambert;
pub mod model;
pub mod observer;
pub mod rational;
pub mod sensors;
pub mod transport;

pub use error::{Error, Result};
pub use model::{PlantState, SystemMatrices, VehicleParams};
pub use transport::{GridSpec, LogSpec, SimTrace, SteeringSpec};
