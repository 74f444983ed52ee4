//! Fast self-checks run by `chemokin verify`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::Serialize;

use crate::continuum::{continuum_growth_rate, continuum_threshold, ContinuumParams};
use crate::error::Result;
use crate::field::{mass_identity_check, solve_chemoattractant};
use crate::kinetic::{
    case_oracle, classify, critical_stiffness, growth_rate, is_unstable_mode, residual_i1,
    DispersionAux,
};
use crate::ks::{mode_amplitude, InitialCondition, KsConfig, KsSolver, DIFFUSION};
use crate::model::{named_set, GrowthModel, ModelParams, TABLE_CASES};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }

    fn from_result(name: &'static str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Diffusion constant used by the continuum integrator under test.
    pub diffusion: f64,
    pub dispersion_draws: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            diffusion: DIFFUSION,
            dispersion_draws: 1000,
            seed: 20_240_601,
        }
    }
}

pub fn run_checks(opts: &VerifyOptions) -> Vec<Check> {
    vec![
        Check::from_result("table-classification", table_classification()),
        Check::from_result("field-solver", field_solver()),
        Check::from_result(
            "dispersion-equivalence",
            dispersion_equivalence(opts.dispersion_draws, opts.seed),
        ),
        Check::from_result("continuum-limit", continuum_limit()),
        Check::from_result("continuum-dispersion", continuum_dispersion(opts.diffusion)),
    ]
}

/// Classification of the seven tabulated cases.
pub fn table_classification() -> Result<(bool, String)> {
    let mut wrong = Vec::new();
    for case in TABLE_CASES {
        let p = named_set(case.set)
            .expect("tabulated set")
            .to_model(case.k)?;
        if classify(&p)?.unstable != case.unstable {
            wrong.push(format!("{} k={}", case.set, case.k));
        }
    }
    let n = TABLE_CASES.len();
    Ok((
        wrong.is_empty(),
        format!("{}/{} match{}", n - wrong.len(), n, list(&wrong)),
    ))
}

fn list(items: &[String]) -> String {
    if items.is_empty() {
        String::new()
    } else {
        format!("; mismatches: {}", items.join(", "))
    }
}

/// Manufactured cosine solutions and the mass identity.
pub fn field_solver() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (n, mode, d, dx) in [
        (2000usize, 68usize, 0.1, 0.05),
        (128, 5, 1.0, 0.1),
        (333, 100, 0.02, 0.3),
    ] {
        let w = 2.0 * PI * mode as f64 / n as f64;
        let rho: Vec<f64> = (0..n).map(|i| 1.0 + 0.4 * (w * i as f64).cos()).collect();
        let symbol = 1.0 + 2.0 * d / (dx * dx) * (1.0 - w.cos());
        let s = solve_chemoattractant(&rho, d, dx)?;
        for (i, v) in s.iter().enumerate() {
            worst = worst.max((v - (1.0 + 0.4 * (w * i as f64).cos() / symbol)).abs());
        }
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    let mut mass: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(8..500);
        let rho: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let s = solve_chemoattractant(
            &rho,
            rng.random_range(0.0..2.0),
            rng.random_range(0.01..0.5),
        )?;
        mass = mass.max(mass_identity_check(&rho, &s));
    }
    Ok((
        worst < 1e-12 && mass < 1e-10,
        format!("cosine error {worst:.2e}, mass defect {mass:.2e}"),
    ))
}

/// Random draw of parameters and wavenumber, spread around the instability
/// threshold.
pub fn random_case<R: Rng>(rng: &mut R) -> (ModelParams, f64) {
    let k = 10f64.powf(rng.random_range(-1.5..1.0));
    let d = k * 10f64.powf(rng.random_range(-1.5..1.0));
    let chi = rng.random_range(0.05..0.95);
    let ratio = 10f64.powf(rng.random_range(0.0..1.7));
    let delta = chi / (ratio * k);
    let lambda = 10f64.powf(rng.random_range(-1.5..1.5)) / k.sqrt();
    (ModelParams { k, d, chi, delta }, lambda)
}

/// Closed-form criterion, real-branch root and brute-force intersection agree.
pub fn dispersion_equivalence(draws: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let (mut disagree, mut unstable, mut worst_residual) = (0usize, 0usize, 0.0f64);
    for _ in 0..draws {
        let (p, lambda) = random_case(&mut rng);
        let a = is_unstable_mode(lambda, &p)?;
        let g = growth_rate(lambda, &p)?;
        let b = g.mu1.is_some_and(|m| m > 0.0);
        let c = case_oracle(&DispersionAux::neutral(lambda, &p)?, p.k * lambda);
        if a != b || b != c {
            disagree += 1;
        }
        unstable += usize::from(a);
        if let Some(mu1) = g.mu1 {
            if g.xi_root.is_some() && 1.0 + p.k * mu1 > 0.0 {
                worst_residual = worst_residual.max(residual_i1(mu1, 0.0, lambda, &p)?.abs());
            }
        }
    }
    Ok((
        disagree == 0 && worst_residual < 1e-8,
        format!("{draws} draws ({unstable} unstable), {disagree} disagreements, max root residual {worst_residual:.2e}"),
    ))
}

/// Critical scaled stiffness along `k = eps^2`, `d = eps^2` for
/// `eps = 0.3, 0.1, 0.03`.
pub fn continuum_limit_sequence() -> Result<Vec<(f64, f64)>> {
    [0.3, 0.1, 0.03]
        .iter()
        .map(|&eps: &f64| {
            let k = eps * eps;
            Ok((eps, critical_stiffness(k, k)?.critical_stiffness))
        })
        .collect()
}

pub fn continuum_limit() -> Result<(bool, String)> {
    let seq = continuum_limit_sequence()?;
    let target = continuum_threshold(1.0);
    let monotone = seq.windows(2).all(|w| w[1].1 < w[0].1) && seq.iter().all(|s| s.1 > target);
    let last = seq.last().expect("three points").1;
    let rel = (last - target).abs() / target;
    let values: Vec<String> = seq
        .iter()
        .map(|(e, v)| format!("eps={e}: {v:.5}"))
        .collect();
    Ok((
        monotone && rel < 0.02,
        format!("{} -> {target:.5} (rel {rel:.2e})", values.join(", ")),
    ))
}

/// Fitted linear growth rate of a single seeded mode of the continuum
/// integrator, and the mode's wavenumber.
pub fn fitted_mode_rate(cp: &ContinuumParams, mode: usize, diffusion: f64) -> Result<(f64, f64)> {
    let mut cfg = KsConfig {
        d_hat: cp.d_hat,
        chi_hat: 0.5,
        delta_hat: 0.5 / cp.fp_hat,
        length: 20.0 * PI,
        sites: 400,
        dt: 0.0,
        t_end: 2.0,
        snapshot_every: 2.0,
        growth: GrowthModel::Logistic,
        initial: InitialCondition::Mode {
            mode,
            amplitude: 1e-6,
        },
    };
    cfg.dt = cfg.cfl_limit()?;
    let lattice = cfg.lattice()?;
    let lambda = 2.0 * PI * mode as f64 / cfg.length;
    let mut solver = KsSolver::new(&cfg)?.with_diffusion(diffusion);
    let a0 = mode_amplitude(&solver.state().grid.rho, &lattice, lambda)
        .abs()
        .ln();
    while solver.state().t < cfg.t_end {
        solver.step(cfg.dt)?;
    }
    let a1 = mode_amplitude(&solver.state().grid.rho, &lattice, lambda)
        .abs()
        .ln();
    Ok(((a1 - a0) / solver.state().t, lambda))
}

/// Seeded-mode rates against the closed-form continuum dispersion, 5% tolerance.
pub fn continuum_dispersion(diffusion: f64) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (d, f) in [(1.0, 16.0), (1.0, 4.0)] {
        let cp = ContinuumParams::new(d, f)?;
        for mode in [4, 8, 12, 16, 20] {
            let (rate, lambda) = fitted_mode_rate(&cp, mode, diffusion)?;
            let exact = continuum_growth_rate(lambda, &cp);
            worst = worst.max((rate - exact).abs() / exact.abs());
        }
    }
    Ok((
        worst < 0.05,
        format!("max relative rate error {worst:.2e} over 10 modes"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_checks_pass() {
        let opts = VerifyOptions {
            dispersion_draws: 200,
            ..Default::default()
        };
        for c in run_checks(&opts) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn perturbed_diffusion_is_caught() {
        let (ok, detail) = continuum_dispersion(0.3).unwrap();
        assert!(!ok, "{detail}");
    }
}
