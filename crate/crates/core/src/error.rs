// SPDX-License-Identifier: Apache-2.0

//! Error type shared by every module.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building generators or integrating.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical or numerical parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A function was evaluated at a point where it is undefined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature stopped before reaching the requested tolerance.
    #[error(
        "quadrature did not converge: estimated error {achieved:.3e} > target {target:.3e} \
         after {panels} panels"
    )]
    QuadratureNotConverged { achieved: f64, target: f64, panels: usize },

    /// The initial panel subdivision alone already exceeds the panel budget.
    #[error("quadrature needs at least {required} panels but the budget is {budget}")]
    PanelBudget { required: usize, budget: usize },

    /// The adaptive ODE integrator could not make progress.
    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    /// A linear system that should be uniquely solvable was singular.
    #[error("singular system: {0}")]
    Singular(String),

    /// Coefficient matrices violate a structural requirement (Hermiticity,
    /// basis, shape).
    #[error("malformed coefficients: {0}")]
    Malformed(String),

    /// Input data (configuration, coefficient dump) could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// A sampled trajectory is too sparse or too short for the requested
    /// finite-difference check.
    #[error("insufficient sampling: {0}")]
    Sampling(String),
}
