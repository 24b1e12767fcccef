// SPDX-License-Identifier: Apache-2.0

//! Reduced dynamics of a three-oscillator harmonic chain coupled at its ends
//! to two thermal baths.
//!
//! The crate builds four descriptions of the same open system and checks
//! their transport properties against each other:
//!
//! * a discretized-bath *exact* reference evolved as one big quadratic
//!   (star-shaped) system,
//! * the *local* GKSL generator, where each bath acts on its boundary site,
//! * the *global* GKSL generator, built in the normal-mode basis of the chain,
//! * the *time-coarse-grained* (TCG) generator, which depends on an averaging
//!   window `Δt` and interpolates between the two regimes.
//!
//! All generators share one canonical normal form ([`generators::GeneratorCoefficients`]),
//! so the Gaussian covariance machinery in [`dynamics`] and the continuity
//! checks in [`transport`] never branch on where the coefficients came from.
//!
//! Module map:
//!
//! * [`model`] — parameters, spectral density, Bose occupations, normal modes.
//! * [`quadrature`] — adaptive Gauss–Kronrod integration and principal values.
//! * [`generators`] — local, global and TCG coefficient builders.
//! * [`dynamics`] — covariance drift/diffusion, integration, steady states,
//!   and the discretized-bath reference.
//! * [`transport`] — currents, energy continuity, probability continuity.
//! * [`cli`] — scenario configuration and the `oqs-chain` subcommands.

// Range checks are written as `!(x < y)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod generators;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod quadrature;
pub mod transport;

pub use error::{Error, Result};

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex64;
