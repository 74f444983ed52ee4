//! Kinetic chemotaxis with a stiff, saturating tumbling response.
//!
//! The crate bundles a Monte Carlo run-and-tumble simulator, the linear
//! stability analysis of its homogeneous state, a flux-limited Keller-Segel
//! integrator for the diffusion limit, and spectral pattern diagnostics.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod continuum;
pub mod error;
pub mod field;
pub mod kinetic;
pub mod ks;
pub mod mc;
pub mod model;
pub mod quadrature;
pub mod snapshot;
pub mod spectrum;
pub mod verify;

pub use error::{Error, Result};
pub use model::{GrowthModel, ModelParams, ResponseFunction, ScaledParams};
