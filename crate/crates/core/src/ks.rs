//! Explicit finite-volume integrator for the flux-limited Keller-Segel
//! system in scaled variables:
//!
//! `rho_t + (U[log S] rho)_x = rho_xx / 3 + P(rho) rho`, `-d_hat S_xx + S = rho`,
//! with `U[g] = int_0^1 v F_hat(v g) dv` and `F_hat(Y) = chi_hat tanh(Y / delta_hat)`.
//!
//! Face fluxes are first-order upwind in `rho` on the sign of `U`; face
//! gradients of `log S` are the two-point differences across the face.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::continuum::ContinuumParams;
use crate::error::{ensure, Error, Result};
use crate::field::{FieldGrid, Lattice, ScreenedPoisson};
use crate::model::{GrowthModel, ModelParams, ResponseFunction, ScaledParams};
use crate::quadrature::unit_interval_16;
use crate::snapshot::Snapshot;

/// Diffusion constant from the velocity-sphere average `<v_x^2> = 1/3`.
pub const DIFFUSION: f64 = 1.0 / 3.0;

/// Abort threshold on `max rho`.
pub const BLOW_UP: f64 = 1e3;

/// Advective and diffusive CFL safety factor.
pub const CFL_SAFETY: f64 = 0.4;

/// `U[g] = int_0^1 v chi tanh(v g / delta) dv` by 16-point Gauss-Legendre.
pub fn flux_u(grad_log_s: f64, rf_hat: &ResponseFunction) -> f64 {
    if grad_log_s == 0.0 {
        return 0.0;
    }
    let u: f64 = unit_interval_16()
        .iter()
        .map(|&(v, w)| w * v * (v * grad_log_s / rf_hat.delta).tanh())
        .sum::<f64>()
        * rf_hat.chi;
    let cap = 0.5 * rf_hat.chi;
    u.clamp(-cap, cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitialCondition {
    Uniform,
    /// `1 + amplitude * (2u - 1)` with `u` uniform per site.
    Noise {
        amplitude: f64,
        seed: u64,
    },
    /// `1 + amplitude * cos(2 pi mode x / L)` at site centres.
    Mode {
        mode: usize,
        amplitude: f64,
    },
}

impl InitialCondition {
    pub fn density(&self, lattice: &Lattice) -> Vec<f64> {
        let n = lattice.sites;
        match *self {
            InitialCondition::Uniform => vec![1.0; n],
            InitialCondition::Noise { amplitude, seed } => {
                let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
                (0..n)
                    .map(|_| 1.0 + amplitude * (2.0 * rng.random::<f64>() - 1.0))
                    .collect()
            }
            InitialCondition::Mode { mode, amplitude } => {
                let w = 2.0 * std::f64::consts::PI * mode as f64 / lattice.length();
                (0..n)
                    .map(|i| 1.0 + amplitude * (w * lattice.center(i)).cos())
                    .collect()
            }
        }
    }
}

/// Continuum run configuration; all lengths are in scaled units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsConfig {
    pub d_hat: f64,
    pub chi_hat: f64,
    pub delta_hat: f64,
    pub length: f64,
    pub sites: usize,
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_every: f64,
    #[serde(default)]
    pub growth: GrowthModel,
    pub initial: InitialCondition,
}

impl KsConfig {
    /// Scaled counterpart of a kinetic setup with `eps = sqrt(k)`:
    /// `d_hat = d/k`, `chi_hat = chi/sqrt(k)`, `delta_hat = sqrt(k) delta`,
    /// `L_hat = L / sqrt(k)`. The time step is set to the CFL limit.
    pub fn from_kinetic(
        p: &ModelParams,
        kinetic_length: f64,
        sites: usize,
        t_end: f64,
    ) -> Result<Self> {
        p.validate()?;
        let s = ScaledParams::from_model(p);
        let mut cfg = Self {
            d_hat: s.d_over_k,
            chi_hat: s.chi_over_sqrt_k,
            delta_hat: s.sqrt_k_delta,
            length: kinetic_length / p.k.sqrt(),
            sites,
            dt: 0.0,
            t_end,
            snapshot_every: 4.0,
            growth: GrowthModel::Logistic,
            initial: InitialCondition::Noise {
                amplitude: 1e-4,
                seed: 1,
            },
        };
        cfg.fit_dt()?;
        Ok(cfg)
    }

    /// Largest stable step that divides `snapshot_every` evenly.
    pub fn fit_dt(&mut self) -> Result<()> {
        let limit = self.cfl_limit()?;
        ensure(
            self.snapshot_every > 0.0 && self.snapshot_every.is_finite(),
            || format!("snapshot_every must be > 0, got {}", self.snapshot_every),
        )?;
        self.dt = self.snapshot_every / (self.snapshot_every / limit).ceil();
        Ok(())
    }

    pub fn response(&self) -> ResponseFunction {
        ResponseFunction {
            chi: self.chi_hat,
            delta: self.delta_hat,
        }
    }

    pub fn continuum_params(&self) -> Result<ContinuumParams> {
        ContinuumParams::new(self.d_hat, self.chi_hat / self.delta_hat)
    }

    pub fn lattice(&self) -> Result<Lattice> {
        ensure(self.length > 0.0 && self.length.is_finite(), || {
            format!("length must be > 0, got {}", self.length)
        })?;
        ensure(self.sites >= 4, || {
            format!("need at least 4 sites, got {}", self.sites)
        })?;
        Lattice::new(self.sites, self.length / self.sites as f64)
    }

    /// `0.4 min(3 dx^2, dx / max|U|)` with `max|U|` bounded by `chi_hat / 2`.
    pub fn cfl_limit(&self) -> Result<f64> {
        let dx = self.lattice()?.dx;
        let diffusive = dx * dx / DIFFUSION;
        let umax = 0.5 * self.chi_hat;
        let advective = if umax > 0.0 { dx / umax } else { f64::INFINITY };
        Ok(CFL_SAFETY * diffusive.min(advective))
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.d_hat >= 0.0 && self.d_hat.is_finite(), || {
            format!("bad d_hat {}", self.d_hat)
        })?;
        ensure(self.chi_hat >= 0.0 && self.chi_hat.is_finite(), || {
            format!("bad chi_hat {}", self.chi_hat)
        })?;
        ensure(self.delta_hat > 0.0 && self.delta_hat.is_finite(), || {
            format!("delta_hat must be > 0, got {}", self.delta_hat)
        })?;
        ensure(self.t_end >= 0.0 && self.t_end.is_finite(), || {
            format!("bad t_end {}", self.t_end)
        })?;
        ensure(
            self.snapshot_every > 0.0 && self.snapshot_every.is_finite(),
            || format!("snapshot_every must be > 0, got {}", self.snapshot_every),
        )?;
        let limit = self.cfl_limit()?;
        if !(self.dt > 0.0 && self.dt <= limit * (1.0 + 1e-12)) {
            return Err(Error::Cfl { dt: self.dt, limit });
        }
        if let InitialCondition::Noise { amplitude, .. }
        | InitialCondition::Mode { amplitude, .. } = self.initial
        {
            ensure(amplitude.abs() < 1.0, || {
                format!("initial amplitude {amplitude} must be below 1")
            })?;
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    pub fn snapshot_stride(&self) -> u64 {
        ((self.snapshot_every / self.dt).round() as u64).max(1)
    }
}

/// Solution state: density and chemoattractant on the grid at time `t`.
#[derive(Debug, Clone)]
pub struct KsState {
    pub grid: FieldGrid,
    pub t: f64,
    pub d_hat: f64,
    pub rf_hat: ResponseFunction,
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    /// Sites set to zero after going negative.
    pub clamped: usize,
    pub max_abs_u: f64,
}

/// Integrator owning the state, field factorisation and work arrays.
pub struct KsSolver {
    state: KsState,
    lattice: Lattice,
    field: ScreenedPoisson,
    growth: GrowthModel,
    diffusion: f64,
    flux: Vec<f64>,
    clamped_total: usize,
}

impl KsSolver {
    pub fn new(cfg: &KsConfig) -> Result<Self> {
        cfg.validate()?;
        let lattice = cfg.lattice()?;
        let field = ScreenedPoisson::new(lattice.sites, cfg.d_hat, lattice.dx)?;
        let rho = cfg.initial.density(&lattice);
        let s = field.solve(&rho)?;
        Ok(Self {
            state: KsState {
                grid: FieldGrid { lattice, rho, s },
                t: 0.0,
                d_hat: cfg.d_hat,
                rf_hat: cfg.response(),
            },
            lattice,
            field,
            growth: cfg.growth,
            diffusion: DIFFUSION,
            flux: vec![0.0; lattice.sites],
            clamped_total: 0,
        })
    }

    /// Replace the diffusion constant. Only for mutation checks of the
    /// verification suite.
    #[doc(hidden)]
    pub fn with_diffusion(mut self, c: f64) -> Self {
        self.diffusion = c;
        self
    }

    pub fn state(&self) -> &KsState {
        &self.state
    }

    pub fn clamped_total(&self) -> usize {
        self.clamped_total
    }

    pub fn cfl_limit(&self) -> f64 {
        let dx = self.lattice.dx;
        let umax = 0.5 * self.state.rf_hat.chi;
        let advective = if umax > 0.0 { dx / umax } else { f64::INFINITY };
        CFL_SAFETY * (dx * dx / DIFFUSION).min(advective)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            t: self.state.t,
            rho: self.state.grid.rho.clone(),
            particles: None,
        }
    }

    /// Advance by `dt`; the field is recomputed from the current density.
    pub fn step(&mut self, dt: f64) -> Result<StepReport> {
        let limit = self.cfl_limit();
        if !(dt > 0.0 && dt <= limit * (1.0 + 1e-12)) {
            return Err(Error::Cfl { dt, limit });
        }
        let n = self.lattice.sites;
        let dx = self.lattice.dx;
        let KsState { grid, rf_hat, .. } = &mut self.state;
        self.field.solve_into(&grid.rho, &mut grid.s)?;
        if let Some((site, &value)) = grid.s.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(Error::NonPositiveField { site, value });
        }
        let rho = &grid.rho;
        let mut max_u = 0.0f64;
        // flux[i] lives on the face between sites i and i+1
        for i in 0..n {
            let j = (i + 1) % n;
            let g = (grid.s[j].ln() - grid.s[i].ln()) / dx;
            let u = flux_u(g, rf_hat);
            max_u = max_u.max(u.abs());
            let upwind = if u >= 0.0 { rho[i] } else { rho[j] };
            self.flux[i] = u * upwind - self.diffusion * (rho[j] - rho[i]) / dx;
        }
        let mut report = StepReport {
            clamped: 0,
            max_abs_u: max_u,
        };
        let r = dt / dx;
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let left = self.flux[(i + n - 1) % n];
                let v = rho[i] - r * (self.flux[i] - left) + dt * self.growth.rate(rho[i]) * rho[i];
                if v < 0.0 {
                    report.clamped += 1;
                    0.0
                } else {
                    v
                }
            })
            .collect();
        if let Some(&bad) = next.iter().find(|v| !v.is_finite() || **v > BLOW_UP) {
            return Err(Error::Aborted(format!(
                "density {bad} exceeds {BLOW_UP} at t = {}",
                self.state.t + dt
            )));
        }
        self.state.grid.rho = next;
        self.state.t += dt;
        self.clamped_total += report.clamped;
        Ok(report)
    }
}

/// One explicit step of `state` without a persistent solver.
pub fn ks_step(state: &KsState, dt: f64, growth: GrowthModel) -> Result<(KsState, StepReport)> {
    let lattice = state.grid.lattice;
    let cfg = KsConfig {
        d_hat: state.d_hat,
        chi_hat: state.rf_hat.chi,
        delta_hat: state.rf_hat.delta,
        length: lattice.length(),
        sites: lattice.sites,
        dt,
        t_end: dt,
        snapshot_every: dt,
        growth,
        initial: InitialCondition::Uniform,
    };
    let mut solver = KsSolver::new(&cfg)?;
    solver.state = state.clone();
    let report = solver.step(dt)?;
    Ok((solver.state, report))
}

/// Integrate to `t_end`, handing each snapshot (including `t = 0`) to `sink`.
/// Returns the total clamp count.
pub fn ks_run_with(cfg: &KsConfig, mut sink: impl FnMut(&Snapshot) -> Result<()>) -> Result<usize> {
    let mut solver = KsSolver::new(cfg)?;
    let stride = cfg.snapshot_stride();
    sink(&solver.snapshot())?;
    let steps = cfg.steps();
    for n in 1..=steps {
        solver.step(cfg.dt)?;
        if n % stride == 0 || n == steps {
            sink(&solver.snapshot())?;
        }
    }
    Ok(solver.clamped_total())
}

pub fn ks_run(cfg: &KsConfig) -> Result<Vec<Snapshot>> {
    let mut out = Vec::new();
    ks_run_with(cfg, |s| {
        out.push(s.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Growth rate of the discrete linearised scheme for mode `lambda`
/// (Euler-in-time factor excluded).
pub fn discrete_growth_rate(lambda: f64, cp: &ContinuumParams, dx: f64, diffusion: f64) -> f64 {
    let sigma = 2.0 * (1.0 - (lambda * dx).cos()) / (dx * dx);
    -1.0 + cp.fp_hat / 3.0 * sigma / (1.0 + cp.d_hat * sigma) - diffusion * sigma
}

/// Projection of `rho - 1` on `cos(lambda x)` at site centres, scaled so a
/// pure `A cos` returns `A`.
pub fn mode_amplitude(rho: &[f64], lattice: &Lattice, lambda: f64) -> f64 {
    let n = rho.len() as f64;
    2.0 / n
        * rho
            .iter()
            .enumerate()
            .map(|(i, r)| (r - 1.0) * (lambda * lattice.center(i)).cos())
            .sum::<f64>()
}
