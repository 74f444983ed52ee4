//! Linear stability of the homogeneous state of the kinetic model.
//!
//! A perturbation `exp(mu t + i lambda x)` with `mu = mu1 + i lambda mu2`
//! solves the linearised problem iff two real integral conditions hold.
//! Both have closed forms in the auxiliary variables
//!
//! ```text
//! alpha = (1 - k) / (k lambda)
//! beta  = F'(0) / (k (1 + d lambda^2))
//! xi    = k lambda / (1 + k mu1)
//! ```
//!
//! On the real branch `mu2 = 0` the second condition is void and the first
//! reduces to `(alpha xi - beta) phi(xi) = 1 - beta`, `phi = atan(xi)/xi`.
//! A root with `0 < xi < k lambda` is a growing mode, which happens exactly
//! when `F'(0)/k > [1 + k / (k lambda / atan(k lambda) - 1)] (1 + d lambda^2)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ensure, Error, Result};
use crate::model::ModelParams;

/// Below this argument `phi` and `z/atan(z) - 1` switch to their series.
pub const SERIES_SWITCH: f64 = 1e-4;

const CRIT_GRID_LO: f64 = 1e-3;
const CRIT_GRID_HI: f64 = 1e3;
const CRIT_GRID_POINTS: usize = 2400;
const CRIT_REL_TOL: f64 = 1e-10;

const ROOT_XI_LO: f64 = 1e-8;
const ROOT_GRID_POINTS: usize = 4000;
const ROOT_REL_TOL: f64 = 1e-12;

const ORACLE_LINEAR_POINTS: usize = 100_000;
const ORACLE_LOG_POINTS: usize = 400;

/// Auxiliary variables of the dispersion relation for one `(lambda, mu1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DispersionAux {
    pub alpha: f64,
    pub beta: f64,
    pub xi: f64,
}

impl DispersionAux {
    pub fn at(lambda: f64, mu1: f64, p: &ModelParams) -> Result<Self> {
        ensure(lambda > 0.0 && lambda.is_finite(), || {
            format!("lambda must be > 0, got {lambda}")
        })?;
        let denom = 1.0 + p.k * mu1;
        ensure(denom > 0.0, || {
            format!("1 + k mu1 must be > 0, got {denom}")
        })?;
        let xi = p.k * lambda / denom;
        ensure(xi.is_finite(), || {
            "xi overflow (mu1 too close to -1/k)".into()
        })?;
        Ok(Self {
            alpha: (1.0 - p.k) / (p.k * lambda),
            beta: p.stiffness() / (p.k * (1.0 + p.d * lambda * lambda)),
            xi,
        })
    }

    /// Coefficients at the neutral point `mu1 = 0`, where `xi = k lambda`.
    pub fn neutral(lambda: f64, p: &ModelParams) -> Result<Self> {
        Self::at(lambda, 0.0, p)
    }
}

/// Per-wavenumber outcome of the real-branch root search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DispersionResult {
    pub lambda: f64,
    pub xi_root: Option<f64>,
    pub mu1: Option<f64>,
    pub mu2: f64,
    pub unstable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalCurvePoint {
    pub k: f64,
    pub d: f64,
    pub critical_stiffness: f64,
    pub argmin_lambda: f64,
}

/// `atan(xi) / xi`, continuous at zero.
pub fn phi(xi: f64) -> Result<f64> {
    if !(xi >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "phi needs xi >= 0, got {xi}"
        )));
    }
    Ok(phi_unchecked(xi))
}

#[inline]
fn phi_unchecked(xi: f64) -> f64 {
    if xi < SERIES_SWITCH {
        let x2 = xi * xi;
        1.0 - x2 / 3.0 + x2 * x2 / 5.0
    } else {
        xi.atan() / xi
    }
}

/// `(1 - beta) / (alpha xi - beta)`.
pub fn psi(xi: f64, aux: &DispersionAux) -> Result<f64> {
    let den = aux.alpha * xi - aux.beta;
    if den == 0.0 {
        return Err(Error::Pole(xi));
    }
    Ok((1.0 - aux.beta) / den)
}

/// `z / atan(z) - 1` for `z > 0`, with the series `z^2/3 - 4 z^4/45` near 0.
#[inline]
fn z_over_atan_minus_one(z: f64) -> f64 {
    if z < SERIES_SWITCH {
        let z2 = z * z;
        z2 / 3.0 - 4.0 * z2 * z2 / 45.0
    } else {
        z / z.atan() - 1.0
    }
}

#[inline]
fn rhs_unchecked(lambda: f64, k: f64, d: f64) -> f64 {
    (1.0 + k / z_over_atan_minus_one(k * lambda)) * (1.0 + d * lambda * lambda)
}

/// Right-hand side of the per-mode instability inequality: mode `lambda`
/// grows iff `F'(0)/k` exceeds this value.
pub fn instability_rhs(lambda: f64, k: f64, d: f64) -> Result<f64> {
    ensure(lambda > 0.0 && lambda.is_finite(), || {
        format!("lambda must be > 0, got {lambda}")
    })?;
    ensure(k > 0.0 && k.is_finite(), || {
        format!("k must be > 0, got {k}")
    })?;
    ensure(d >= 0.0 && d.is_finite(), || {
        format!("d must be >= 0, got {d}")
    })?;
    Ok(rhs_unchecked(lambda, k, d))
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Smallest stiffness ratio `F'(0)/k` for which some mode is unstable,
/// together with the minimising wavenumber.
pub fn critical_stiffness(k: f64, d: f64) -> Result<CriticalCurvePoint> {
    ensure(k > 0.0 && k.is_finite(), || {
        format!("k must be > 0, got {k}")
    })?;
    ensure(d > 0.0 && d.is_finite(), || {
        format!("critical stiffness needs d > 0, got {d}")
    })?;
    let (lo, hi) = (CRIT_GRID_LO.ln(), CRIT_GRID_HI.ln());
    let step = (hi - lo) / (CRIT_GRID_POINTS - 1) as f64;
    let f = |s: f64| rhs_unchecked(s.exp(), k, d);
    let best = (0..CRIT_GRID_POINTS)
        .map(|i| (i, f(lo + step * i as f64)))
        .fold(
            (0, f64::INFINITY),
            |acc, (i, v)| if v < acc.1 { (i, v) } else { acc },
        );
    let i = best.0;
    let a = lo + step * i.saturating_sub(1) as f64;
    let b = lo + step * (i + 1).min(CRIT_GRID_POINTS - 1) as f64;
    // interval in log-lambda, so the width is a relative tolerance on lambda
    let s = golden_min(f, a, b, CRIT_REL_TOL);
    let argmin = s.exp();
    Ok(CriticalCurvePoint {
        k,
        d,
        critical_stiffness: f(s),
        argmin_lambda: argmin,
    })
}

/// Critical stiffness over a `(k, d/k)` grid, row-major in `k`.
pub fn critical_curve(ks: &[f64], d_over_k: &[f64]) -> Result<Vec<CriticalCurvePoint>> {
    let jobs: Vec<(f64, f64)> = ks
        .iter()
        .flat_map(|&k| d_over_k.iter().map(move |&r| (k, r * k)))
        .collect();
    jobs.par_iter()
        .map(|&(k, d)| critical_stiffness(k, d))
        .collect()
}

pub fn is_unstable_mode(lambda: f64, p: &ModelParams) -> Result<bool> {
    Ok(p.stiffness_ratio() > instability_rhs(lambda, p.k, p.d)?)
}

#[inline]
fn real_branch(xi: f64, aux: &DispersionAux) -> f64 {
    phi_unchecked(xi) * (aux.alpha * xi - aux.beta) - (1.0 - aux.beta)
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> f64 {
    let mut fa = f(a);
    while (b - a) > rel_tol * b.abs() {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fa < 0.0) == (fm < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Real-branch (`mu2 = 0`) growth rate of mode `lambda`: the largest `mu1`
/// whose `xi` solves `(alpha xi - beta) phi(xi) = 1 - beta`.
pub fn growth_rate(lambda: f64, p: &ModelParams) -> Result<DispersionResult> {
    let aux = DispersionAux::neutral(lambda, p)?;
    let k = p.k;
    if (aux.beta - 1.0).abs() <= 1e-12 {
        // the equation degenerates to (alpha xi - 1) phi = 0: alpha xi = 1
        let xi_root = (aux.alpha > 0.0).then(|| 1.0 / aux.alpha);
        return Ok(DispersionResult {
            lambda,
            xi_root,
            mu1: Some(-1.0),
            mu2: 0.0,
            unstable: false,
        });
    }
    let hi = f64::max(1e3, 10.0 * k * lambda);
    let (lo_s, hi_s) = (ROOT_XI_LO.ln(), hi.ln());
    let step = (hi_s - lo_s) / (ROOT_GRID_POINTS - 1) as f64;
    let f = |xi: f64| real_branch(xi, &aux);
    let mut prev_xi = ROOT_XI_LO;
    let mut prev_f = f(prev_xi);
    let mut root = None;
    for i in 1..ROOT_GRID_POINTS {
        let xi = (lo_s + step * i as f64).exp();
        let fx = f(xi);
        if prev_f == 0.0 {
            root = Some(prev_xi);
            break;
        }
        if (prev_f < 0.0) != (fx < 0.0) {
            root = Some(bisect(f, prev_xi, xi, ROOT_REL_TOL));
            break;
        }
        prev_xi = xi;
        prev_f = fx;
    }
    Ok(match root {
        Some(xi) => {
            let mu1 = lambda / xi - 1.0 / k;
            DispersionResult {
                lambda,
                xi_root: Some(xi),
                mu1: Some(mu1),
                mu2: 0.0,
                unstable: mu1 > 0.0,
            }
        }
        None => DispersionResult {
            lambda,
            xi_root: None,
            mu1: None,
            mu2: 0.0,
            unstable: false,
        },
    })
}

fn xi_checked(mu1: f64, lambda: f64, p: &ModelParams) -> Result<DispersionAux> {
    DispersionAux::at(lambda, mu1, p)
}

/// Residual (LHS - RHS) of the first (real-part) dispersion condition.
///
/// Equals `integral - 2` of the velocity integral it was derived from; the
/// `mu2 * beta * log(..)` term carries a factor 1/2 from integrating
/// `w / (1 + xi^2 w^2)`.
pub fn residual_i1(mu1: f64, mu2: f64, lambda: f64, p: &ModelParams) -> Result<f64> {
    let DispersionAux { alpha, beta, xi } = xi_checked(mu1, lambda, p)?;
    let datan = (xi * (mu2 + 1.0)).atan() - (xi * (mu2 - 1.0)).atan();
    let x2 = xi * xi;
    let num = 1.0 + x2 * (mu2 - 1.0) * (mu2 - 1.0);
    let den = 1.0 + x2 * (mu2 + 1.0) * (mu2 + 1.0);
    let log = (num / den).ln();
    Ok((alpha - beta / xi) * datan + 0.5 * mu2 * beta * log - (2.0 - 2.0 * beta))
}

/// Residual of the second (imaginary-part) dispersion condition.
pub fn residual_i2(mu1: f64, mu2: f64, lambda: f64, p: &ModelParams) -> Result<f64> {
    let DispersionAux { alpha, beta, xi } = xi_checked(mu1, lambda, p)?;
    let datan = (xi * (mu2 + 1.0)).atan() - (xi * (mu2 - 1.0)).atan();
    let x2 = xi * xi;
    // 4 mu2 / (xi^-2 + (mu2 - 1)^2), written without xi^-2
    let t = 4.0 * mu2 * x2 / (1.0 + x2 * (mu2 - 1.0) * (mu2 - 1.0));
    if !(1.0 + t > 0.0) || !t.is_finite() {
        return Err(Error::LogDomain(1.0 + t));
    }
    Ok(mu2 * beta * datan + 0.5 * (alpha - beta / xi) * t.ln_1p())
}

/// Brute-force check for an intersection of `phi` and `psi` on
/// `0 < xi < k lambda`, sampled densely and skipping the pole of `psi`.
pub fn case_oracle(aux: &DispersionAux, k_lambda: f64) -> bool {
    if !(k_lambda > 0.0) {
        return false;
    }
    let pole = if aux.alpha != 0.0 {
        Some(aux.beta / aux.alpha)
    } else {
        None
    };
    let g = |xi: f64| -> Option<f64> {
        let p = psi(xi, aux).ok()?;
        Some(phi_unchecked(xi) - p)
    };
    let mut samples: Vec<f64> = Vec::with_capacity(ORACLE_LINEAR_POINTS + ORACLE_LOG_POINTS);
    let first_linear = k_lambda / ORACLE_LINEAR_POINTS as f64;
    let (lo, hi) = ((k_lambda * 1e-10).ln(), first_linear.ln());
    for j in 0..ORACLE_LOG_POINTS {
        samples.push((lo + (hi - lo) * j as f64 / ORACLE_LOG_POINTS as f64).exp());
    }
    for j in 1..=ORACLE_LINEAR_POINTS {
        samples.push(k_lambda * j as f64 / ORACLE_LINEAR_POINTS as f64);
    }
    let last = samples.len() - 1;
    let mut prev: Option<(f64, f64)> = None;
    for (j, &xi) in samples.iter().enumerate() {
        let cur = g(xi);
        if let Some(v) = cur {
            if v == 0.0 && j != last {
                return true;
            }
            if let Some((pxi, pv)) = prev {
                let straddles_pole = pole.is_some_and(|xp| pxi <= xp && xp <= xi);
                if !straddles_pole && (pv < 0.0) != (v < 0.0) && pv != 0.0 && v != 0.0 {
                    return true;
                }
            }
        }
        prev = cur.map(|v| (xi, v));
    }
    false
}

/// Upper end of the band where `beta > 1`, `sqrt((F'(0)/k - 1) / d)`. Every
/// unstable mode lies below it. `None` when `F'(0)/k <= 1` or `d = 0`.
pub fn band_bound(p: &ModelParams) -> Option<f64> {
    let r = p.stiffness_ratio();
    (r > 1.0 && p.d > 0.0).then(|| ((r - 1.0) / p.d).sqrt())
}

/// Interval of unstable wavenumbers, or `None` when the set is stable.
pub fn unstable_band(p: &ModelParams) -> Result<Option<(f64, f64)>> {
    p.validate()?;
    let crit = critical_stiffness(p.k, p.d)?;
    let ratio = p.stiffness_ratio();
    if ratio <= crit.critical_stiffness {
        return Ok(None);
    }
    let g = |s: f64| rhs_unchecked(s.exp(), p.k, p.d) - ratio;
    let c = crit.argmin_lambda.ln();
    let mut lo = c - 1.0;
    while g(lo) <= 0.0 {
        lo -= 1.0;
    }
    let mut hi = c + 1.0;
    while g(hi) <= 0.0 {
        hi += 1.0;
    }
    let left = bisect_abs(g, lo, c, 1e-13);
    let right = bisect_abs(g, c, hi, 1e-13);
    Ok(Some((left.exp(), right.exp())))
}

fn bisect_abs(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let fa_neg = f(a) < 0.0;
    while b - a > tol {
        let m = 0.5 * (a + b);
        if (f(m) < 0.0) == fa_neg {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Wavenumber of maximal real-branch growth inside the unstable band.
pub fn most_unstable_mode(p: &ModelParams) -> Result<Option<(f64, f64)>> {
    let Some((a, b)) = unstable_band(p)? else {
        return Ok(None);
    };
    let mu = |s: f64| -> f64 {
        growth_rate(s.exp(), p)
            .ok()
            .and_then(|r| r.mu1)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let (la, lb) = (a.ln(), b.ln());
    let n = 200;
    let h = (lb - la) / n as f64;
    let best = (0..=n).map(|i| la + h * i as f64).map(|s| (s, mu(s))).fold(
        (la, f64::NEG_INFINITY),
        |acc, x| if x.1 > acc.1 { x } else { acc },
    );
    let s = golden_min(|s| -mu(s), (best.0 - h).max(la), (best.0 + h).min(lb), 1e-9);
    Ok(Some((s.exp(), mu(s))))
}

/// Summary used by the `classify` command.
#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub stiffness_ratio: f64,
    pub critical: CriticalCurvePoint,
    pub unstable: bool,
    pub band: Option<(f64, f64)>,
    pub most_unstable: Option<(f64, f64)>,
}

pub fn classify(p: &ModelParams) -> Result<Classification> {
    p.validate()?;
    let critical = critical_stiffness(p.k, p.d)?;
    let ratio = p.stiffness_ratio();
    let band = unstable_band(p)?;
    let most_unstable = most_unstable_mode(p)?;
    Ok(Classification {
        stiffness_ratio: ratio,
        critical,
        unstable: ratio > critical.critical_stiffness,
        band,
        most_unstable,
    })
}
