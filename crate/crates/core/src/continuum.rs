//! Closed-form linear stability of the flux-limited Keller-Segel limit.
//!
//! Under `k = eps^2`, `x = eps x_hat`, `d = eps^2 d_hat`, `F'(0) = eps^2 Fp_hat`
//! the growth rate of mode `lambda_hat` is
//! `-1 + Fp_hat lambda_hat^2 / (3 (1 + d_hat lambda_hat^2)) - lambda_hat^2 / 3`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuumParams {
    pub d_hat: f64,
    pub fp_hat: f64,
}

impl ContinuumParams {
    pub fn new(d_hat: f64, fp_hat: f64) -> Result<Self> {
        ensure(d_hat > 0.0 && d_hat.is_finite(), || {
            format!("d_hat must be > 0, got {d_hat}")
        })?;
        ensure(fp_hat >= 0.0 && fp_hat.is_finite(), || {
            format!("Fp_hat must be >= 0, got {fp_hat}")
        })?;
        Ok(Self { d_hat, fp_hat })
    }

    /// Continuum counterpart of kinetic parameters, taking `eps = sqrt(k)`.
    pub fn from_kinetic(p: &ModelParams) -> Result<Self> {
        Self::new(p.d / p.k, p.stiffness() / p.k)
    }
}

pub fn continuum_growth_rate(lambda_hat: f64, cp: &ContinuumParams) -> f64 {
    let l2 = lambda_hat * lambda_hat;
    -1.0 + cp.fp_hat * l2 / (3.0 * (1.0 + cp.d_hat * l2)) - l2 / 3.0
}

/// Instability threshold `(1 + sqrt(3 d_hat))^2` on `Fp_hat`.
pub fn continuum_threshold(d_hat: f64) -> f64 {
    let s = 1.0 + (3.0 * d_hat).sqrt();
    s * s
}

/// Maximiser `sqrt((sqrt(Fp_hat) - 1) / d_hat)` of the growth rate.
pub fn most_unstable_mode(cp: &ContinuumParams) -> Result<f64> {
    if cp.fp_hat < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "no interior maximiser for Fp_hat = {} < 1",
            cp.fp_hat
        )));
    }
    Ok(((cp.fp_hat.sqrt() - 1.0) / cp.d_hat).sqrt())
}

/// Continuum-threshold curve `(d_hat, threshold)` on the given abscissae.
pub fn threshold_curve(d_hats: &[f64]) -> Vec<(f64, f64)> {
    d_hats
        .iter()
        .map(|&d| (d, continuum_threshold(d)))
        .collect()
}
