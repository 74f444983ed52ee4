//! Monte Carlo run-and-tumble simulator.
//!
//! Each time step performs, in order: free flight of every particle, a
//! recount of the lattice density followed by a fresh chemoattractant solve,
//! tumbling driven by the sensed change of `log S` along each path, and
//! logistic division/death. Only the `x` coordinate of position is tracked;
//! velocities are full unit 3-vectors.
//!
//! Random numbers come from independent xoshiro256++ streams keyed by
//! `(seed, step, phase, block)`, where a block is a fixed-size run of
//! particle indices. Results are therefore identical for any rayon pool size.

use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::field::{Lattice, ScreenedPoisson};
use crate::model::{GrowthModel, ModelParams, ResponseFunction};
use crate::snapshot::Snapshot;

/// Particles per RNG stream.
pub const BLOCK: usize = 16_384;

/// Abort once the population exceeds this multiple of its initial size.
pub const EXPLOSION_FACTOR: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub params: ModelParams,
    /// Domain length `L`.
    pub length: f64,
    /// Number of lattice sites `I`.
    pub sites: usize,
    pub dt: f64,
    /// Reference particles per site `M`.
    pub particles_per_site: usize,
    pub t_end: f64,
    pub seed: u64,
    pub snapshot_every: f64,
    #[serde(default)]
    pub growth: GrowthModel,
    #[serde(default = "default_true")]
    pub tumbling: bool,
}

fn default_true() -> bool {
    true
}

impl McConfig {
    /// Reference numerics: `L = 100`, 2000 sites, `dt = 5e-3`, 500 particles
    /// per site.
    pub fn reference(params: ModelParams) -> Self {
        Self {
            params,
            length: 100.0,
            sites: 2000,
            dt: 5e-3,
            particles_per_site: 500,
            t_end: 200.0,
            seed: 1,
            snapshot_every: 4.0,
            growth: GrowthModel::Logistic,
            tumbling: true,
        }
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

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.lattice()?;
        ensure(self.dt > 0.0 && self.dt.is_finite(), || {
            format!("dt must be > 0, got {}", self.dt)
        })?;
        let pmax = self.dt * (1.0 + self.params.chi) / self.params.k;
        ensure(pmax <= 1.0, || {
            format!("tumble probability bound dt(1+chi)/k = {pmax} exceeds 1")
        })?;
        ensure(self.dt <= 1.0, || {
            format!("dt = {} must be <= 1 for the growth step", self.dt)
        })?;
        ensure(self.particles_per_site >= 1, || {
            "need at least one particle per site".into()
        })?;
        ensure(self.t_end >= 0.0 && self.t_end.is_finite(), || {
            format!("bad t_end {}", self.t_end)
        })?;
        ensure(
            self.snapshot_every > 0.0 && self.snapshot_every.is_finite(),
            || format!("snapshot_every must be > 0, got {}", self.snapshot_every),
        )
    }

    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    pub fn snapshot_stride(&self) -> u64 {
        ((self.snapshot_every / self.dt).round() as u64).max(1)
    }
}

/// Positions along `x` and unit velocities, stored column-wise.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParticleEnsemble {
    pub x: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub vz: Vec<f64>,
    /// Interpolated `log S` each particle sensed at the end of the last step.
    pub log_s_prev: Vec<f64>,
    /// False until the first sensing pass; the first pass senses zero change.
    pub primed: bool,
}

impl ParticleEnsemble {
    pub fn count(&self) -> usize {
        self.x.len()
    }

    pub fn push(&mut self, x: f64, v: [f64; 3], log_s_prev: f64) {
        self.x.push(x);
        self.vx.push(v[0]);
        self.vy.push(v[1]);
        self.vz.push(v[2]);
        self.log_s_prev.push(log_s_prev);
    }

    fn swap_remove(&mut self, i: usize) {
        self.x.swap_remove(i);
        self.vx.swap_remove(i);
        self.vy.swap_remove(i);
        self.vz.swap_remove(i);
        self.log_s_prev.swap_remove(i);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Phase {
    Init = 1,
    Sweep = 2,
}

/// Keyed family of independent generator streams.
#[derive(Debug, Clone, Copy)]
pub struct Streams {
    seed: u64,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn stream(&self, step: u64, phase: Phase, block: usize) -> Xoshiro256PlusPlus {
        let mut h = splitmix64(self.seed);
        h = splitmix64(h ^ step);
        h = splitmix64(h ^ phase as u64);
        h = splitmix64(h ^ block as u64);
        Xoshiro256PlusPlus::seed_from_u64(h)
    }
}

const UNIT_SCALE: f64 = 1.0 / (1u64 << 53) as f64;

/// Uniform on `[0, 1)` with 53 random bits.
#[inline]
fn unit(r: u64) -> f64 {
    (r >> 11) as f64 * UNIT_SCALE
}

/// Isotropic unit vector from two uniforms on `[0, 1)`.
#[inline]
pub fn random_unit_velocity(u1: f64, u2: f64) -> [f64; 3] {
    let vx = 1.0 - 2.0 * u1;
    let r = (1.0 - vx * vx).max(0.0).sqrt();
    let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
    [vx, r * c, r * s]
}

#[inline]
fn draw_velocity<R: RngCore>(rng: &mut R) -> [f64; 3] {
    let u1 = unit(rng.next_u64());
    let u2 = unit(rng.next_u64());
    random_unit_velocity(u1, u2)
}

/// Uniform position inside site `i`, never rounding into a neighbour.
fn position_in_site(lattice: &Lattice, i: usize, u: f64) -> f64 {
    let mut x = (i as f64 + u) * lattice.dx;
    while lattice.site_of(x) > i {
        x = f64::from_bits(x.to_bits() - 1);
    }
    while lattice.site_of(x) < i {
        x = f64::from_bits(x.to_bits() + 1);
    }
    x
}

/// Exactly `M` particles per site at uniform positions, isotropic velocities.
pub fn init_uniform(cfg: &McConfig) -> Result<ParticleEnsemble> {
    cfg.validate()?;
    let lattice = cfg.lattice()?;
    let streams = Streams::new(cfg.seed);
    let m = cfg.particles_per_site;
    let per_site: Vec<Vec<(f64, [f64; 3])>> = (0..lattice.sites)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.stream(0, Phase::Init, i);
            (0..m)
                .map(|_| {
                    let x = position_in_site(&lattice, i, rng.random::<f64>());
                    (x, draw_velocity(&mut rng))
                })
                .collect()
        })
        .collect();
    let n = m * lattice.sites;
    let mut ens = ParticleEnsemble {
        x: Vec::with_capacity(n),
        vx: Vec::with_capacity(n),
        vy: Vec::with_capacity(n),
        vz: Vec::with_capacity(n),
        log_s_prev: Vec::with_capacity(n),
        primed: false,
    };
    for (x, v) in per_site.into_iter().flatten() {
        ens.push(x, v, 0.0);
    }
    Ok(ens)
}

#[inline]
fn wrap(x: f64, length: f64) -> f64 {
    let mut y = x;
    if y >= length {
        y -= length;
    } else if y < 0.0 {
        y += length;
    }
    if !(0.0..length).contains(&y) {
        y = y.rem_euclid(length);
        if y >= length {
            y = 0.0;
        }
    }
    y
}

/// Free flight `x <- (x + vx dt) mod L`.
pub fn step_move(ens: &mut ParticleEnsemble, dt: f64, length: f64) {
    ens.x
        .par_chunks_mut(BLOCK)
        .zip(ens.vx.par_chunks(BLOCK))
        .for_each(|(x, vx)| {
            for (xi, &v) in x.iter_mut().zip(vx) {
                *xi = wrap(*xi + v * dt, length);
            }
        });
}

/// Free flight followed by a site count, in one pass.
pub fn step_move_and_count(ens: &mut ParticleEnsemble, dt: f64, lattice: &Lattice) -> Vec<u32> {
    let length = lattice.length();
    let ParticleEnsemble { x, vx, .. } = ens;
    x.par_chunks_mut(BLOCK)
        .zip(vx.par_chunks(BLOCK))
        .fold(
            || vec![0u32; lattice.sites],
            |mut acc, (x, vx)| {
                for (xi, &v) in x.iter_mut().zip(vx) {
                    *xi = wrap(*xi + v * dt, length);
                    acc[lattice.site_of(*xi)] += 1;
                }
                acc
            },
        )
        .reduce(|| vec![0u32; lattice.sites], add_counts)
}

fn add_counts(mut a: Vec<u32>, b: Vec<u32>) -> Vec<u32> {
    for (p, q) in a.iter_mut().zip(b) {
        *p += q;
    }
    a
}

fn counts_to_density(counts: Vec<u32>, m: usize) -> Vec<f64> {
    let inv = 1.0 / m as f64;
    counts.into_iter().map(|c| c as f64 * inv).collect()
}

/// Per-site particle counts.
pub fn site_counts(ens: &ParticleEnsemble, lattice: &Lattice) -> Vec<u32> {
    ens.x
        .par_chunks(BLOCK)
        .fold(
            || vec![0u32; lattice.sites],
            |mut acc, xs| {
                for &x in xs {
                    acc[lattice.site_of(x)] += 1;
                }
                acc
            },
        )
        .reduce(|| vec![0u32; lattice.sites], add_counts)
}

/// `rho_i = M_i / M`.
pub fn compute_density(ens: &ParticleEnsemble, lattice: &Lattice, m: usize) -> Vec<f64> {
    counts_to_density(site_counts(ens, lattice), m)
}

/// Piecewise-linear reconstruction of `log S` with centred slopes,
/// stored as `intercept + slope * x` per site.
#[derive(Debug, Clone)]
pub struct LogField {
    lattice: Lattice,
    /// `(intercept, slope)` per site
    coef: Vec<(f64, f64)>,
}

impl LogField {
    pub fn new(s: &[f64], lattice: &Lattice) -> Result<Self> {
        let n = lattice.sites;
        ensure(s.len() == n, || {
            format!("field has {} values for {} sites", s.len(), n)
        })?;
        if let Some((site, &value)) = s.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(Error::NonPositiveField { site, value });
        }
        let log_s: Vec<f64> = s.iter().map(|v| v.ln()).collect();
        let inv = 1.0 / (2.0 * lattice.dx);
        let coef = (0..n)
            .map(|i| {
                let g = (log_s[(i + 1) % n] - log_s[(i + n - 1) % n]) * inv;
                (log_s[i] - g * lattice.center(i), g)
            })
            .collect();
        Ok(Self {
            lattice: *lattice,
            coef,
        })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let (a, b) = self.coef[self.lattice.site_of(x)];
        a + b * x
    }
}

/// `log S(x) = log S_i + (log S_{i+1} - log S_{i-1}) / (2 dx) * (x - x_{i+1/2})`
/// with `i` the site containing `x` and neighbours taken periodically.
pub fn interpolate_log_s(s: &[f64], x: f64, lattice: &Lattice) -> Result<f64> {
    let n = lattice.sites;
    ensure(s.len() == n, || {
        format!("field has {} values for {} sites", s.len(), n)
    })?;
    let i = lattice.site_of(x);
    let idx = [(i + n - 1) % n, i, (i + 1) % n];
    for &j in &idx {
        if !(s[j] > 0.0) {
            return Err(Error::NonPositiveField {
                site: j,
                value: s[j],
            });
        }
    }
    let g = (s[idx[2]].ln() - s[idx[0]].ln()) / (2.0 * lattice.dx);
    Ok(s[i].ln() + g * (x - lattice.center(i)))
}

/// Forward difference of sensed `log S` along a path; zero without history.
#[inline]
pub fn sensed_material_derivative(current: f64, previous: Option<f64>, dt: f64) -> f64 {
    match previous {
        Some(p) => (current - p) / dt,
        None => 0.0,
    }
}

/// Parameters of the tumbling step.
#[derive(Debug, Clone, Copy)]
pub struct TumbleRule {
    pub dt: f64,
    pub k: f64,
    pub response: ResponseFunction,
    pub enabled: bool,
}

impl TumbleRule {
    pub fn from_config(cfg: &McConfig) -> Self {
        Self {
            dt: cfg.dt,
            k: cfg.params.k,
            response: cfg.params.response(),
            enabled: cfg.tumbling,
        }
    }

    /// Tumble probability for sensed signal `dlogs`.
    #[inline]
    pub fn probability(&self, dlogs: f64) -> f64 {
        if self.enabled {
            self.dt / self.k * self.response.kernel(dlogs)
        } else {
            0.0
        }
    }
}

const HALF_SCALE: f64 = 1.0 / (1u64 << 32) as f64;

/// Sensing and tumbling inputs of a sweep.
struct TumblePass<'a> {
    field: &'a LogField,
    rule: &'a TumbleRule,
}

/// Per-site event probabilities `|P(rho_i)| dt` and signs of `P`.
struct GrowthPass<'a> {
    lattice: &'a Lattice,
    prob: Vec<f64>,
    divides: Vec<bool>,
}

impl<'a> GrowthPass<'a> {
    fn new(rho: &[f64], lattice: &'a Lattice, dt: f64, growth: GrowthModel) -> Option<Self> {
        let rate: Vec<f64> = rho.iter().map(|&r| growth.rate(r)).collect();
        if rate.iter().all(|&p| p == 0.0) {
            return None;
        }
        Some(Self {
            lattice,
            prob: rate.iter().map(|p| p.abs() * dt).collect(),
            divides: rate.iter().map(|&p| p > 0.0).collect(),
        })
    }
}

type Births = Vec<(f64, [f64; 3], f64)>;

struct BlockOutcome {
    tumbles: usize,
    births: Births,
    deaths: Vec<usize>,
}

/// One pass over all particles. Each particle consumes one 64-bit draw whose
/// high and low halves are the tumble and growth uniforms; velocity redraws
/// and newborn positions follow on the same block stream.
fn sweep(
    ens: &mut ParticleEnsemble,
    tumble: Option<TumblePass<'_>>,
    growth: Option<GrowthPass<'_>>,
    streams: &Streams,
    step: u64,
) -> (usize, GrowthEvents) {
    let primed = ens.primed;
    let (pmax, dt) = match &tumble {
        Some(t) if t.rule.enabled => (
            t.rule.dt * (1.0 + t.rule.response.chi) / t.rule.k,
            t.rule.dt,
        ),
        Some(t) => (0.0, t.rule.dt),
        None => (0.0, 1.0),
    };
    let pmax_bits = (pmax / HALF_SCALE).ceil().min(u32::MAX as f64 + 1.0) as u64;
    let ParticleEnsemble {
        x,
        vx,
        vy,
        vz,
        log_s_prev,
        ..
    } = ens;
    let outcomes: Vec<BlockOutcome> = x
        .par_chunks(BLOCK)
        .zip(vx.par_chunks_mut(BLOCK))
        .zip(vy.par_chunks_mut(BLOCK))
        .zip(vz.par_chunks_mut(BLOCK))
        .zip(log_s_prev.par_chunks_mut(BLOCK))
        .enumerate()
        .map(|(b, ((((x, vx), vy), vz), prev))| {
            let mut rng = streams.stream(step, Phase::Sweep, b);
            let mut out = BlockOutcome {
                tumbles: 0,
                births: Vec::new(),
                deaths: Vec::new(),
            };
            for j in 0..x.len() {
                let r = rng.next_u64();
                if let Some(t) = &tumble {
                    let cur = t.field.eval(x[j]);
                    let old = std::mem::replace(&mut prev[j], cur);
                    let hi = r >> 32;
                    // p <= pmax, so most particles are rejected before tanh
                    if hi < pmax_bits {
                        let d = sensed_material_derivative(cur, primed.then_some(old), dt);
                        if (hi as f64) * HALF_SCALE < t.rule.probability(d) {
                            let v = draw_velocity(&mut rng);
                            vx[j] = v[0];
                            vy[j] = v[1];
                            vz[j] = v[2];
                            out.tumbles += 1;
                        }
                    }
                }
                if let Some(g) = &growth {
                    let site = g.lattice.site_of(x[j]);
                    let lo = (r & 0xFFFF_FFFF) as f64 * HALF_SCALE;
                    if lo < g.prob[site] {
                        if g.divides[site] {
                            let nx = position_in_site(g.lattice, site, unit(rng.next_u64()));
                            out.births.push((nx, [vx[j], vy[j], vz[j]], prev[j]));
                        } else {
                            out.deaths.push(b * BLOCK + j);
                        }
                    }
                }
            }
            out
        })
        .collect();
    if tumble.is_some() {
        ens.primed = true;
    }
    let mut events = GrowthEvents::default();
    let tumbles = outcomes.iter().map(|o| o.tumbles).sum();
    // descending order keeps swap_remove from moving a doomed particle
    for o in outcomes.iter().rev() {
        for &g in o.deaths.iter().rev() {
            ens.swap_remove(g);
        }
        events.deaths += o.deaths.len();
    }
    for o in outcomes {
        events.births += o.births.len();
        for (x, v, prev) in o.births {
            ens.push(x, v, prev);
        }
    }
    (tumbles, events)
}

/// Sense the field along each path and tumble with probability
/// `(dt/k) K(D_t log S)`. Returns the number of tumbles.
pub fn step_tumble(
    ens: &mut ParticleEnsemble,
    field: &LogField,
    rule: &TumbleRule,
    streams: &Streams,
    step: u64,
) -> usize {
    sweep(ens, Some(TumblePass { field, rule }), None, streams, step).0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GrowthEvents {
    pub births: usize,
    pub deaths: usize,
}

/// Division (`P > 0`) or death (`P < 0`) with probability `|P(rho_i)| dt`.
/// A newborn copies its parent's velocity and sensing history and is placed
/// uniformly within the parent's site.
pub fn step_growth(
    ens: &mut ParticleEnsemble,
    rho: &[f64],
    lattice: &Lattice,
    dt: f64,
    growth: GrowthModel,
    streams: &Streams,
    step: u64,
) -> GrowthEvents {
    match GrowthPass::new(rho, lattice, dt, growth) {
        Some(g) => sweep(ens, None, Some(g), streams, step).1,
        None => GrowthEvents::default(),
    }
}

/// Tumbling followed by growth in a single sweep. Growth decisions use the
/// post-tumble velocities, as in the sequential order.
pub fn step_tumble_and_grow(
    ens: &mut ParticleEnsemble,
    field: &LogField,
    rule: &TumbleRule,
    rho: &[f64],
    growth: GrowthModel,
    streams: &Streams,
    step: u64,
) -> (usize, GrowthEvents) {
    let lattice = field.lattice;
    let g = GrowthPass::new(rho, &lattice, rule.dt, growth);
    sweep(ens, Some(TumblePass { field, rule }), g, streams, step)
}

/// Stepwise driver owning the ensemble and the field solver.
pub struct McSimulation {
    cfg: McConfig,
    lattice: Lattice,
    solver: ScreenedPoisson,
    streams: Streams,
    rule: TumbleRule,
    ens: ParticleEnsemble,
    rho: Vec<f64>,
    s: Vec<f64>,
    step: u64,
    initial_count: usize,
}

impl McSimulation {
    pub fn new(cfg: McConfig) -> Result<Self> {
        cfg.validate()?;
        let lattice = cfg.lattice()?;
        let solver = ScreenedPoisson::new(lattice.sites, cfg.params.d, lattice.dx)?;
        let ens = init_uniform(&cfg)?;
        let rho = compute_density(&ens, &lattice, cfg.particles_per_site);
        let s = solver.solve(&rho)?;
        let initial_count = ens.count();
        Ok(Self {
            streams: Streams::new(cfg.seed),
            rule: TumbleRule::from_config(&cfg),
            cfg,
            lattice,
            solver,
            ens,
            rho,
            s,
            step: 0,
            initial_count,
        })
    }

    pub fn config(&self) -> &McConfig {
        &self.cfg
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn ensemble(&self) -> &ParticleEnsemble {
        &self.ens
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    /// Density used for the most recent field solve (after the move).
    pub fn sensed_density(&self) -> &[f64] {
        &self.rho
    }

    pub fn chemoattractant(&self) -> &[f64] {
        &self.s
    }

    /// Density of the current ensemble.
    pub fn density(&self) -> Vec<f64> {
        compute_density(&self.ens, &self.lattice, self.cfg.particles_per_site)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            t: self.time(),
            rho: self.density(),
            particles: Some(self.ens.count()),
        }
    }

    pub fn step(&mut self) -> Result<GrowthEvents> {
        let n = self.step + 1;
        let counts = step_move_and_count(&mut self.ens, self.cfg.dt, &self.lattice);
        self.rho = counts_to_density(counts, self.cfg.particles_per_site);
        self.solver.solve_into(&self.rho, &mut self.s)?;
        let field = LogField::new(&self.s, &self.lattice)?;
        let (_, events) = step_tumble_and_grow(
            &mut self.ens,
            &field,
            &self.rule,
            &self.rho,
            self.cfg.growth,
            &self.streams,
            n,
        );
        self.step = n;
        check_population(self.ens.count(), self.initial_count, self.time())?;
        Ok(events)
    }
}

pub fn check_population(count: usize, initial: usize, t: f64) -> Result<()> {
    if count > EXPLOSION_FACTOR * initial {
        return Err(Error::Aborted(format!(
            "particle count {count} exceeds {EXPLOSION_FACTOR}x the initial {initial} at t = {t}"
        )));
    }
    Ok(())
}

/// Run to `t_end`, handing each snapshot (including `t = 0`) to `sink`.
pub fn run_with(cfg: &McConfig, mut sink: impl FnMut(&Snapshot) -> Result<()>) -> Result<()> {
    let mut sim = McSimulation::new(cfg.clone())?;
    let stride = cfg.snapshot_stride();
    sink(&sim.snapshot())?;
    let steps = cfg.steps();
    for n in 1..=steps {
        sim.step()?;
        if n % stride == 0 || n == steps {
            sink(&sim.snapshot())?;
        }
    }
    Ok(())
}

pub fn run(cfg: &McConfig) -> Result<Vec<Snapshot>> {
    let mut out = Vec::new();
    run_with(cfg, |s| {
        out.push(s.clone());
        Ok(())
    })?;
    Ok(out)
}
