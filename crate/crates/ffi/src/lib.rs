//! C ABI over `chemokin`.
//!
//! Every fallible function returns a [`ChkStatus`]; on failure a message is
//! kept per thread and can be fetched with [`chk_last_error`]. Simulations
//! are exposed as opaque handles that must be released with their `_free`
//! function. Panics never cross the boundary.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chemokin::field::solve_chemoattractant;
use chemokin::kinetic::{classify, critical_stiffness, growth_rate};
use chemokin::ks::{InitialCondition, KsConfig, KsSolver};
use chemokin::mc::{McConfig, McSimulation};
use chemokin::model::{named_set, GrowthModel, ModelParams, ScaledParams};
use chemokin::spectrum::power_spectrum;
use chemokin::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    BufferTooSmall = 3,
    Runtime = 4,
    Panic = 5,
}

/// Physical model parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ChkParams {
    pub k: f64,
    pub d: f64,
    pub chi: f64,
    pub delta: f64,
}

impl From<ChkParams> for ModelParams {
    fn from(p: ChkParams) -> Self {
        ModelParams {
            k: p.k,
            d: p.d,
            chi: p.chi,
            delta: p.delta,
        }
    }
}

impl From<ModelParams> for ChkParams {
    fn from(p: ModelParams) -> Self {
        ChkParams {
            k: p.k,
            d: p.d,
            chi: p.chi,
            delta: p.delta,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ChkClassification {
    pub stiffness_ratio: f64,
    pub critical_stiffness: f64,
    pub critical_lambda: f64,
    pub unstable: bool,
    /// When set, `band_lo..band_hi` holds the unstable wavenumbers.
    pub has_band: bool,
    pub band_lo: f64,
    pub band_hi: f64,
    pub most_unstable_lambda: f64,
    pub most_unstable_mu: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ChkDispersion {
    pub lambda: f64,
    /// False when the real branch has no root at this wavenumber.
    pub has_root: bool,
    pub mu1: f64,
    pub unstable: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ChkMcConfig {
    pub params: ChkParams,
    pub length: f64,
    pub sites: usize,
    pub dt: f64,
    pub particles_per_site: usize,
    pub seed: u64,
    pub growth: bool,
    pub tumbling: bool,
}

/// Continuum run in scaled units. `dt <= 0` selects the stability limit;
/// `initial_mode > 0` seeds a cosine of that mode instead of noise.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ChkKsConfig {
    pub d_hat: f64,
    pub chi_hat: f64,
    pub delta_hat: f64,
    pub length: f64,
    pub sites: usize,
    pub dt: f64,
    pub growth: bool,
    pub amplitude: f64,
    pub initial_mode: usize,
    pub seed: u64,
}

/// Opaque Monte Carlo simulation.
pub struct ChkMc(McSimulation);

/// Opaque continuum integrator.
pub struct ChkKs {
    solver: KsSolver,
    dt: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> ChkStatus {
    match e {
        Error::Aborted(_) | Error::NonPositiveField { .. } | Error::Io(_) => ChkStatus::Runtime,
        _ => ChkStatus::InvalidParameter,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (ChkStatus, String)>) -> ChkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ChkStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ChkStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (ChkStatus, String)>;
}

impl<T> IntoFfi<T> for chemokin::Result<T> {
    fn ffi(self) -> Result<T, (ChkStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (ChkStatus, String) {
    (ChkStatus::NullPointer, format!("{what} is null"))
}

fn too_small(need: usize, have: usize) -> (ChkStatus, String) {
    (
        ChkStatus::BufferTooSmall,
        format!("buffer holds {have} values, need {need}"),
    )
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn chk_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Physical parameters of a named reference set (`"A"`..`"D"`) at `k`.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn chk_named_set(
    name: *const c_char,
    k: f64,
    out: *mut ChkParams,
) -> ChkStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| (ChkStatus::InvalidParameter, "name is not UTF-8".into()))?;
        let set = named_set(name)
            .ok_or_else(|| (ChkStatus::InvalidParameter, format!("unknown set {name:?}")))?;
        *out = set.to_model(k).ffi()?.into();
        Ok(())
    })
}

/// Physical parameters from the scaled triple `(d/k, chi/sqrt(k), sqrt(k) delta)`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn chk_scaled_params(
    d_over_k: f64,
    chi_over_sqrt_k: f64,
    sqrt_k_delta: f64,
    k: f64,
    out: *mut ChkParams,
) -> ChkStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ScaledParams::new(d_over_k, chi_over_sqrt_k, sqrt_k_delta)
            .to_model(k)
            .ffi()?
            .into();
        Ok(())
    })
}

/// Critical `F'(0)/k` for relaxation time `k` and diffusivity `d`, and the
/// wavenumber where it is attained.
///
/// # Safety
/// Output pointers must be valid for writes; `out_lambda` may be null.
#[no_mangle]
pub unsafe extern "C" fn chk_critical_stiffness(
    k: f64,
    d: f64,
    out_value: *mut f64,
    out_lambda: *mut f64,
) -> ChkStatus {
    guard(|| {
        let value = out_value.as_mut().ok_or_else(|| null("out_value"))?;
        let c = critical_stiffness(k, d).ffi()?;
        *value = c.critical_stiffness;
        if let Some(l) = out_lambda.as_mut() {
            *l = c.argmin_lambda;
        }
        Ok(())
    })
}

/// Real-branch growth rate at wavenumber `lambda`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn chk_growth_rate(
    params: ChkParams,
    lambda: f64,
    out: *mut ChkDispersion,
) -> ChkStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let g = growth_rate(lambda, &params.into()).ffi()?;
        *out = ChkDispersion {
            lambda: g.lambda,
            has_root: g.mu1.is_some(),
            mu1: g.mu1.unwrap_or(f64::NAN),
            unstable: g.unstable,
        };
        Ok(())
    })
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn chk_classify(params: ChkParams, out: *mut ChkClassification) -> ChkStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let c = classify(&params.into()).ffi()?;
        let (lo, hi) = c.band.unwrap_or((f64::NAN, f64::NAN));
        let (ml, mm) = c.most_unstable.unwrap_or((f64::NAN, f64::NAN));
        *out = ChkClassification {
            stiffness_ratio: c.stiffness_ratio,
            critical_stiffness: c.critical.critical_stiffness,
            critical_lambda: c.critical.argmin_lambda,
            unstable: c.unstable,
            has_band: c.band.is_some(),
            band_lo: lo,
            band_hi: hi,
            most_unstable_lambda: ml,
            most_unstable_mu: mm,
        };
        Ok(())
    })
}

/// Solve `S - d S'' = rho` on a periodic lattice of `n` sites.
///
/// # Safety
/// `rho` and `out_s` must each be valid for `n` values.
#[no_mangle]
pub unsafe extern "C" fn chk_solve_chemoattractant(
    rho: *const f64,
    n: usize,
    d: f64,
    dx: f64,
    out_s: *mut f64,
) -> ChkStatus {
    guard(|| {
        if rho.is_null() {
            return Err(null("rho"));
        }
        if out_s.is_null() {
            return Err(null("out_s"));
        }
        let rho = std::slice::from_raw_parts(rho, n);
        let s = solve_chemoattractant(rho, d, dx).ffi()?;
        std::slice::from_raw_parts_mut(out_s, n).copy_from_slice(&s);
        Ok(())
    })
}

/// Power `|rho_hat|^2 / k` at modes `0..=n/2` into `out_power`
/// (`out_len >= n/2 + 1`).
///
/// # Safety
/// `rho` must be valid for `n` values and `out_power` for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn chk_power_spectrum(
    rho: *const f64,
    n: usize,
    dx: f64,
    k: f64,
    out_power: *mut f64,
    out_len: usize,
) -> ChkStatus {
    guard(|| {
        if rho.is_null() {
            return Err(null("rho"));
        }
        if out_power.is_null() {
            return Err(null("out_power"));
        }
        let need = n / 2 + 1;
        if out_len < need {
            return Err(too_small(need, out_len));
        }
        let spec = power_spectrum(std::slice::from_raw_parts(rho, n), dx, k).ffi()?;
        std::slice::from_raw_parts_mut(out_power, need).copy_from_slice(&spec.power);
        Ok(())
    })
}

/// Create a Monte Carlo simulation at uniform density.
///
/// # Safety
/// `cfg` must be readable and `out` valid for writes. The handle written to
/// `out` must be released with [`chk_mc_free`].
#[no_mangle]
pub unsafe extern "C" fn chk_mc_new(cfg: *const ChkMcConfig, out: *mut *mut ChkMc) -> ChkStatus {
    guard(|| {
        let c = *cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let mc = McConfig {
            params: c.params.into(),
            length: c.length,
            sites: c.sites,
            dt: c.dt,
            particles_per_site: c.particles_per_site,
            t_end: 0.0,
            seed: c.seed,
            snapshot_every: c.dt,
            growth: if c.growth {
                GrowthModel::Logistic
            } else {
                GrowthModel::Disabled
            },
            tumbling: c.tumbling,
        };
        *out = Box::into_raw(Box::new(ChkMc(McSimulation::new(mc).ffi()?)));
        Ok(())
    })
}

/// Advance by `steps` time steps.
///
/// # Safety
/// `mc` must be a live handle from [`chk_mc_new`].
#[no_mangle]
pub unsafe extern "C" fn chk_mc_step(mc: *mut ChkMc, steps: u64) -> ChkStatus {
    guard(|| {
        let mc = mc.as_mut().ok_or_else(|| null("mc"))?;
        for _ in 0..steps {
            mc.0.step().ffi()?;
        }
        Ok(())
    })
}

/// Simulated time, or NaN for a null handle.
///
/// # Safety
/// `mc` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chk_mc_time(mc: *const ChkMc) -> f64 {
    mc.as_ref().map_or(f64::NAN, |m| m.0.time())
}

/// Live particle count, or 0 for a null handle.
///
/// # Safety
/// `mc` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chk_mc_particles(mc: *const ChkMc) -> usize {
    mc.as_ref().map_or(0, |m| m.0.ensemble().count())
}

/// Copy the density profile (one value per site) into `out`.
///
/// # Safety
/// `mc` must be a live handle and `out` valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn chk_mc_density(mc: *const ChkMc, out: *mut f64, len: usize) -> ChkStatus {
    guard(|| {
        let mc = mc.as_ref().ok_or_else(|| null("mc"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let rho = mc.0.density();
        if len < rho.len() {
            return Err(too_small(rho.len(), len));
        }
        std::slice::from_raw_parts_mut(out, rho.len()).copy_from_slice(&rho);
        Ok(())
    })
}

/// # Safety
/// `mc` must be null or a handle from [`chk_mc_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chk_mc_free(mc: *mut ChkMc) {
    if !mc.is_null() {
        drop(Box::from_raw(mc));
    }
}

/// Create a continuum integrator.
///
/// # Safety
/// `cfg` must be readable and `out` valid for writes. Release the handle
/// with [`chk_ks_free`].
#[no_mangle]
pub unsafe extern "C" fn chk_ks_new(cfg: *const ChkKsConfig, out: *mut *mut ChkKs) -> ChkStatus {
    guard(|| {
        let c = *cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let mut ks = KsConfig {
            d_hat: c.d_hat,
            chi_hat: c.chi_hat,
            delta_hat: c.delta_hat,
            length: c.length,
            sites: c.sites,
            dt: c.dt,
            t_end: 0.0,
            snapshot_every: 1.0,
            growth: if c.growth {
                GrowthModel::Logistic
            } else {
                GrowthModel::Disabled
            },
            initial: if c.initial_mode > 0 {
                InitialCondition::Mode {
                    mode: c.initial_mode,
                    amplitude: c.amplitude,
                }
            } else {
                InitialCondition::Noise {
                    amplitude: c.amplitude,
                    seed: c.seed,
                }
            },
        };
        if !(c.dt > 0.0) {
            ks.dt = ks.cfl_limit().ffi()?;
        }
        ks.snapshot_every = ks.dt;
        let solver = KsSolver::new(&ks).ffi()?;
        *out = Box::into_raw(Box::new(ChkKs { solver, dt: ks.dt }));
        Ok(())
    })
}

/// # Safety
/// `ks` must be a live handle from [`chk_ks_new`].
#[no_mangle]
pub unsafe extern "C" fn chk_ks_step(ks: *mut ChkKs, steps: u64) -> ChkStatus {
    guard(|| {
        let ks = ks.as_mut().ok_or_else(|| null("ks"))?;
        for _ in 0..steps {
            ks.solver.step(ks.dt).ffi()?;
        }
        Ok(())
    })
}

/// Time step in use, or NaN for a null handle.
///
/// # Safety
/// `ks` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chk_ks_dt(ks: *const ChkKs) -> f64 {
    ks.as_ref().map_or(f64::NAN, |k| k.dt)
}

/// # Safety
/// `ks` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chk_ks_time(ks: *const ChkKs) -> f64 {
    ks.as_ref().map_or(f64::NAN, |k| k.solver.state().t)
}

/// # Safety
/// `ks` must be a live handle and `out` valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn chk_ks_density(ks: *const ChkKs, out: *mut f64, len: usize) -> ChkStatus {
    guard(|| {
        let ks = ks.as_ref().ok_or_else(|| null("ks"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let rho = &ks.solver.state().grid.rho;
        if len < rho.len() {
            return Err(too_small(rho.len(), len));
        }
        std::slice::from_raw_parts_mut(out, rho.len()).copy_from_slice(rho);
        Ok(())
    })
}

/// # Safety
/// `ks` must be null or a handle from [`chk_ks_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chk_ks_free(ks: *mut ChkKs) {
    if !ks.is_null() {
        drop(Box::from_raw(ks));
    }
}
