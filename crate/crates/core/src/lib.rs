//! Ruin probabilities for Lévy-driven risk reserves whose parameters are
//! resampled at Poisson epochs.
//!
//! See the module docs of [`model`] for the process definition. The crate
//! computes, for a given initial reserve `u`:
//!
//! * the exact exponential decay rate `omega_star` and prefactor `A` of the
//!   ruin probability, `psi(u) ~ A exp(-omega_star u)` ([`asymptotics`]);
//! * a uniform bound `psi(u) <= Omega exp(-omega_star u)` ([`twist`]);
//! * unbiased Monte Carlo estimates of `psi(u)` with bounded relative
//!   error, by simulating under an exponential change of measure
//!   ([`simulate`]).
//!
//! The spectral machinery shared by these (eigenvalues of the
//! matrix Laplace exponent, ladder-height generator) lives in [`spectral`].

// Validation deliberately writes `!(x > 0.0)` instead of `x <= 0.0`: the
// negated form also rejects NaN, which is exactly what input checks want.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
mod error;
pub mod model;
pub mod simulate;
mod solve;
pub mod spectral;
pub mod twist;

pub use error::{Error, Result};
pub use model::{ClaimLaw, Model, State};
