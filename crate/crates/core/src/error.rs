//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical or numerical parameter failed validation.
    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: &'static str, message: String },

    /// Discretization settings violate the explicit-scheme stability bound.
    #[error("CFL condition violated: max(lambda)*dt/dxi = {cfl:.6} > 1 (N = {n}, dt = {dt:e})")]
    CflViolation { cfl: f64, n: usize, dt: f64 },

    /// A matrix that must be inverted is numerically singular.
    #[error("near-singular matrix in {context}: |det| = {det_mag:e}, scale = {scale:e}")]
    Singular {
        context: &'static str,
        det_mag: f64,
        scale: f64,
    },

    /// An iterative routine failed to converge.
    #[error("{context} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        context: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// Rational approximation could not reach the requested tolerance.
    #[error("rational fit failed: best relative error {best_error:e} at order {best_order} exceeds tolerance {tolerance:e}")]
    FitFailed {
        best_error: f64,
        best_order: usize,
        tolerance: f64,
    },

    /// A state or signal became non-finite during a computation.
    #[error("non-finite value encountered in {context} at t = {time}")]
    NonFinite { context: &'static str, time: f64 },

    /// Input data does not satisfy a documented precondition.
    #[error("invalid input for {context}: {message}")]
    InvalidInput { context: &'static str, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
