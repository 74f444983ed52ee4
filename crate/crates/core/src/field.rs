//! Screened-Poisson chemoattractant solve on a periodic 1-D lattice:
//! `-(d/dx^2)(S[i+1] - 2 S[i] + S[i-1]) + S[i] = rho[i]`, indices mod `I`.

use crate::error::{ensure, Error, Result};

/// Uniform periodic lattice of `sites` cells of width `dx` covering `[0, L)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub sites: usize,
    pub dx: f64,
    inv_dx: f64,
}

impl Lattice {
    pub fn new(sites: usize, dx: f64) -> Result<Self> {
        ensure(sites >= 4, || {
            format!("need at least 4 lattice sites, got {sites}")
        })?;
        ensure(dx > 0.0 && dx.is_finite(), || {
            format!("dx must be > 0, got {dx}")
        })?;
        Ok(Self {
            sites,
            dx,
            inv_dx: 1.0 / dx,
        })
    }

    pub fn length(&self) -> f64 {
        self.sites as f64 * self.dx
    }

    /// Centre `x_{i+1/2}` of site `i`.
    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    /// Site containing `x` in `[0, L)`.
    #[inline]
    pub fn site_of(&self, x: f64) -> usize {
        ((x * self.inv_dx) as usize).min(self.sites - 1)
    }
}

/// Density and chemoattractant arrays on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub lattice: Lattice,
    pub rho: Vec<f64>,
    pub s: Vec<f64>,
}

impl FieldGrid {
    pub fn uniform(lattice: Lattice, value: f64) -> Self {
        Self {
            lattice,
            rho: vec![value; lattice.sites],
            s: vec![value; lattice.sites],
        }
    }
}

/// Factorised periodic operator `1 - d * Laplacian_h`, reusable across
/// right-hand sides. Sherman-Morrison correction of a Thomas solve.
#[derive(Debug, Clone)]
pub struct ScreenedPoisson {
    n: usize,
    off: f64,
    gamma: f64,
    /// modified super-diagonal from the forward sweep
    cp: Vec<f64>,
    inv_den: Vec<f64>,
    /// correction vector `T^-1 u`
    z: Vec<f64>,
    z_factor: f64,
}

impl ScreenedPoisson {
    pub fn new(sites: usize, d: f64, dx: f64) -> Result<Self> {
        ensure(sites >= 4, || {
            format!("need at least 4 lattice sites, got {sites}")
        })?;
        ensure(d >= 0.0 && d.is_finite(), || {
            format!("d must be >= 0, got {d}")
        })?;
        ensure(dx > 0.0 && dx.is_finite(), || {
            format!("dx must be > 0, got {dx}")
        })?;
        let n = sites;
        let off = -d / (dx * dx);
        let diag = 1.0 - 2.0 * off;
        let gamma = -diag;
        let mut b = vec![diag; n];
        b[0] = diag - gamma;
        b[n - 1] = diag - off * off / gamma;

        let mut cp = vec![0.0; n];
        let mut inv_den = vec![0.0; n];
        inv_den[0] = 1.0 / b[0];
        cp[0] = off * inv_den[0];
        for i in 1..n {
            let den = b[i] - off * cp[i - 1];
            inv_den[i] = 1.0 / den;
            cp[i] = off * inv_den[i];
        }
        let mut solver = Self {
            n,
            off,
            gamma,
            cp,
            inv_den,
            z: vec![0.0; n],
            z_factor: 0.0,
        };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = off;
        let mut z = vec![0.0; n];
        solver.thomas(&u, 0.0, &mut z);
        solver.z_factor = 1.0 + z[0] + off * z[n - 1] / gamma;
        solver.z = z;
        Ok(solver)
    }

    /// Tridiagonal solve with right-hand side `r - shift`.
    fn thomas(&self, r: &[f64], shift: f64, x: &mut [f64]) {
        let n = self.n;
        x[0] = (r[0] - shift) * self.inv_den[0];
        for i in 1..n {
            x[i] = ((r[i] - shift) - self.off * x[i - 1]) * self.inv_den[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.cp[i] * x[i + 1];
        }
    }

    pub fn solve_into(&self, rho: &[f64], out: &mut [f64]) -> Result<()> {
        ensure(rho.len() == self.n && out.len() == self.n, || {
            format!(
                "expected arrays of length {}, got {} and {}",
                self.n,
                rho.len(),
                out.len()
            )
        })?;
        if rho.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("density"));
        }
        // constants are fixed points, so solve for the deviation from rho[0];
        // a uniform input then maps to itself exactly
        let base = rho[0];
        self.thomas(rho, base, out);
        let n = self.n;
        let fact = (out[0] + self.off * out[n - 1] / self.gamma) / self.z_factor;
        for (o, z) in out.iter_mut().zip(&self.z) {
            *o = base + (*o - fact * z);
        }
        Ok(())
    }

    pub fn solve(&self, rho: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.solve_into(rho, &mut out)?;
        Ok(out)
    }
}

/// Solve for `S` given `rho` on a periodic lattice of spacing `dx`.
pub fn solve_chemoattractant(rho: &[f64], d: f64, dx: f64) -> Result<Vec<f64>> {
    ensure(d.is_finite() && dx.is_finite(), || {
        "non-finite d or dx".into()
    })?;
    ScreenedPoisson::new(rho.len(), d, dx)?.solve(rho)
}

/// Apply the discrete operator to `s`; returns the implied density.
pub fn apply_operator(s: &[f64], d: f64, dx: f64) -> Vec<f64> {
    let n = s.len();
    let c = d / (dx * dx);
    (0..n)
        .map(|i| {
            let l = s[(i + n - 1) % n];
            let r = s[(i + 1) % n];
            -c * (r - 2.0 * s[i] + l) + s[i]
        })
        .collect()
}

/// `|sum(S) - sum(rho)|`; zero for an exact solve since the periodic
/// Laplacian sums to zero.
pub fn mass_identity_check(rho: &[f64], s: &[f64]) -> f64 {
    (s.iter().sum::<f64>() - rho.iter().sum::<f64>()).abs()
}
