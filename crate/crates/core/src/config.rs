//! TOML run configuration shared by the CLI subcommands.
//!
//! ```toml
//! mode = "mc-run"
//!
//! [params]
//! set = "B"        # or give d_over_k / chi_over_sqrt_k / sqrt_k_delta,
//! k = 0.1          # or the physical d / chi / delta directly
//!
//! [numerics]
//! t_end = 200.0
//! seed = 7
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ks::{InitialCondition, KsConfig};
use crate::mc::McConfig;
use crate::model::{named_set, GrowthModel, ModelParams, ScaledParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    StabilityDiagram,
    Dispersion,
    McRun,
    KsRun,
    Spectrum,
    Verify,
}

/// Model parameters in physical form (`d`, `chi`, `delta`) or in the scaled
/// form of the reference sets, optionally starting from a named set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub k: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_over_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi_over_sqrt_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sqrt_k_delta: Option<f64>,
}

impl ParamSpec {
    pub fn from_set(set: &str, k: f64) -> Self {
        Self {
            k,
            set: Some(set.to_string()),
            ..Default::default()
        }
    }

    pub fn physical(p: &ModelParams) -> Self {
        Self {
            k: p.k,
            d: Some(p.d),
            chi: Some(p.chi),
            delta: Some(p.delta),
            ..Default::default()
        }
    }

    fn any_physical(&self) -> bool {
        self.d.is_some() || self.chi.is_some() || self.delta.is_some()
    }

    fn any_scaled(&self) -> bool {
        self.set.is_some()
            || self.d_over_k.is_some()
            || self.chi_over_sqrt_k.is_some()
            || self.sqrt_k_delta.is_some()
    }

    pub fn resolve(&self) -> Result<ModelParams> {
        match (self.any_physical(), self.any_scaled()) {
            (true, true) => Err(Error::Config(
                "give either physical (d, chi, delta) or scaled parameters, not both".into(),
            )),
            (true, false) => {
                let need = |v: Option<f64>, name: &str| {
                    v.ok_or_else(|| Error::Config(format!("physical parameters need `{name}`")))
                };
                ModelParams::new(
                    self.k,
                    need(self.d, "d")?,
                    need(self.chi, "chi")?,
                    need(self.delta, "delta")?,
                )
            }
            (false, true) => {
                let base = match &self.set {
                    Some(name) => named_set(name)
                        .ok_or_else(|| Error::Config(format!("unknown parameter set {name:?}")))?,
                    None => ScaledParams::new(f64::NAN, f64::NAN, f64::NAN),
                };
                let s = ScaledParams {
                    d_over_k: self.d_over_k.unwrap_or(base.d_over_k),
                    chi_over_sqrt_k: self.chi_over_sqrt_k.unwrap_or(base.chi_over_sqrt_k),
                    sqrt_k_delta: self.sqrt_k_delta.unwrap_or(base.sqrt_k_delta),
                };
                if [s.d_over_k, s.chi_over_sqrt_k, s.sqrt_k_delta]
                    .iter()
                    .any(|v| v.is_nan())
                {
                    return Err(Error::Config(
                        "scaled parameters need d_over_k, chi_over_sqrt_k and sqrt_k_delta (or a set)".into(),
                    ));
                }
                s.to_model(self.k)
            }
            (false, false) => Err(Error::Config("no model parameters given".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub length: f64,
    pub sites: usize,
    pub dt: f64,
    pub particles_per_site: usize,
    pub t_end: f64,
    pub snapshot_every: f64,
    pub seed: u64,
    pub growth: GrowthModel,
    pub tumbling: bool,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            length: 100.0,
            sites: 2000,
            dt: 5e-3,
            particles_per_site: 500,
            t_end: 200.0,
            snapshot_every: 4.0,
            seed: 1,
            growth: GrowthModel::Logistic,
            tumbling: true,
        }
    }
}

/// Averaging window; defaults to the final quarter of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumWindow {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    pub interval: f64,
}

impl Default for SpectrumWindow {
    fn default() -> Self {
        Self {
            t_start: None,
            t_end: None,
            interval: 4.0,
        }
    }
}

impl SpectrumWindow {
    pub fn resolve(&self, run_end: f64) -> (f64, f64, f64) {
        let end = self.t_end.unwrap_or(run_end);
        (self.t_start.unwrap_or(0.75 * end), end, self.interval)
    }
}

/// Continuum-run numerics; lattice length follows from the kinetic length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuumNumerics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sites: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub noise_amplitude: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_mode: Option<usize>,
}

impl Default for ContinuumNumerics {
    fn default() -> Self {
        Self {
            sites: None,
            dt: None,
            noise_amplitude: 1e-4,
            initial_mode: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Binary,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub params: ParamSpec,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub spectrum: SpectrumWindow,
    #[serde(default)]
    pub continuum: ContinuumNumerics,
    #[serde(default)]
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn new(mode: Mode, params: ParamSpec) -> Self {
        Self {
            mode,
            params,
            numerics: Numerics::default(),
            spectrum: SpectrumWindow::default(),
            continuum: ContinuumNumerics::default(),
            output: OutputSpec::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn model(&self) -> Result<ModelParams> {
        self.params.resolve()
    }

    pub fn mc_config(&self) -> Result<McConfig> {
        let n = &self.numerics;
        let cfg = McConfig {
            params: self.model()?,
            length: n.length,
            sites: n.sites,
            dt: n.dt,
            particles_per_site: n.particles_per_site,
            t_end: n.t_end,
            seed: n.seed,
            snapshot_every: n.snapshot_every,
            growth: n.growth,
            tumbling: n.tumbling,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn ks_config(&self) -> Result<KsConfig> {
        let n = &self.numerics;
        let c = &self.continuum;
        let mut cfg = KsConfig::from_kinetic(
            &self.model()?,
            n.length,
            c.sites.unwrap_or(n.sites),
            n.t_end,
        )?;
        cfg.snapshot_every = n.snapshot_every;
        cfg.growth = n.growth;
        cfg.initial = match c.initial_mode {
            Some(mode) => InitialCondition::Mode {
                mode,
                amplitude: c.noise_amplitude,
            },
            None if c.noise_amplitude == 0.0 => InitialCondition::Uniform,
            None => InitialCondition::Noise {
                amplitude: c.noise_amplitude,
                seed: n.seed,
            },
        };
        match c.dt {
            Some(dt) => cfg.dt = dt,
            None => cfg.fit_dt()?,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
