//! A desk-scale laboratory for measuring how averaged-iterate gradient descent
//! and stochastic gradient descent generalize on smooth convex losses.
//!
//! The crate is organized in four layers:
//!
//! * [`instances`]: a small zoo of loss families `f(w, z)` with exact
//!   closed-form population risks, canonical minimizers, and declared
//!   smoothness. Each family witnesses one regime of excess-risk behavior
//!   (overfitting growth with the training horizon, sample-complexity floors,
//!   optimization-error floors, or long-horizon non-overfitting).
//! * [`optimizers`]: full-batch GD and with-replacement SGD with the
//!   averaged iterate as the declared output.
//! * [`analytics`]: closed-form recurrences, explicit constant floors, bound
//!   envelopes, and event probabilities that serve as exact oracles for the
//!   optimizer runs.
//! * [`experiments`]: a seeded Monte-Carlo harness: dataset conditioning on
//!   rare events, excess-risk estimation over (η, T, n) grids, log-log rate
//!   fitting, envelope comparison, and CSV/JSON output.
//!
//! The math layers are generic over the scalar type through [`Scalar`]
//! (`f32` or `f64`); the experiment harness is pinned to `f64` because its
//! serialization and reproducibility contracts are stated in 64-bit terms.

pub mod analytics;
pub mod experiments;
pub mod instances;
pub mod optimizers;
mod scalar;

pub use scalar::Scalar;

/// Concrete scalar used by the experiment harness and the CLI.
pub type Real = f64;
