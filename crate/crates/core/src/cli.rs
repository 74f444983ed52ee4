//! Command-line front end. `main.rs` only forwards to [`main_with_args`].

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use crate::config::{Mode, OutputFormat, ParamSpec, RunConfig};
use crate::continuum::{self, threshold_curve, ContinuumParams};
use crate::error::Error;
use crate::kinetic::{classify, critical_curve, growth_rate};
use crate::ks::ks_run_with;
use crate::mc::run_with;
use crate::model::{ModelParams, TABLE_CASES};
use crate::snapshot::{
    read_binary, read_csv, write_header, BinarySnapshotWriter, CsvSnapshotWriter, Snapshot,
    SolverKind,
};
use crate::spectrum::{
    detect_first_peak, pattern_metrics, peak_search_bound, spacetime_map, time_averaged_spectrum,
};
use crate::verify::{run_checks, VerifyOptions};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;

const DEFAULT_OUT: &str = "chemokin-out";
const CONFIG_MARK: &str = "---";

#[derive(Debug, Parser)]
#[command(
    name = "chemokin",
    version,
    about = "Stiff-response kinetic chemotaxis toolkit"
)]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Critical stiffness over a (k, d/k) grid plus the continuum overlay.
    StabilityDiagram(DiagramArgs),
    /// Linear-stability report for one parameter set, or the reference table.
    Classify(ClassifyArgs),
    /// Kinetic and continuum growth rates over a wavenumber grid.
    Dispersion(DispersionArgs),
    /// Monte Carlo particle simulation.
    McRun(RunArgs),
    /// Flux-limited Keller-Segel integration in scaled units.
    KsRun(RunArgs),
    /// Spectrum, pattern metrics and space-time map of a saved run.
    Spectrum(SpectrumArgs),
    /// Fast self-checks; exit code 3 on failure.
    Verify(VerifyArgs),
    /// Execute the mode named in a config file.
    Run(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ParamArgs {
    /// Named reference set (A, B, C or D).
    #[arg(long)]
    pub set: Option<String>,
    /// Tumbling relaxation time k.
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long)]
    pub chi: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub d_over_k: Option<f64>,
    #[arg(long)]
    pub chi_over_sqrt_k: Option<f64>,
    #[arg(long)]
    pub sqrt_k_delta: Option<f64>,
}

impl ParamArgs {
    fn apply(&self, spec: &mut ParamSpec) {
        let physical = self.d.is_some() || self.chi.is_some() || self.delta.is_some();
        let scaled = self.set.is_some()
            || self.d_over_k.is_some()
            || self.chi_over_sqrt_k.is_some()
            || self.sqrt_k_delta.is_some();
        if physical && !scaled {
            spec.set = None;
            spec.d_over_k = None;
            spec.chi_over_sqrt_k = None;
            spec.sqrt_k_delta = None;
        }
        if scaled && !physical {
            spec.d = None;
            spec.chi = None;
            spec.delta = None;
        }
        if let Some(k) = self.k {
            spec.k = k;
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if self.$f.is_some() { spec.$f = self.$f.clone(); } )* };
        }
        set!(set, d, chi, delta, d_over_k, chi_over_sqrt_k, sqrt_k_delta);
    }

    fn resolve(&self) -> Result<ModelParams, Error> {
        let mut spec = ParamSpec::default();
        self.apply(&mut spec);
        if self.k.is_none() {
            return Err(Error::Config("--k is required".into()));
        }
        spec.resolve()
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Binary,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long, env = "CHEMOKIN_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

impl OutputArgs {
    fn dir(&self, cfg_dir: Option<&Path>) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg_dir.map(Path::to_path_buf))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

#[derive(Debug, Args)]
pub struct DiagramArgs {
    /// Comma-separated k values.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 1.0, 2.0, 10.0])]
    pub k: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub d_over_k_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub d_over_k_max: f64,
    /// Log-spaced d/k points.
    #[arg(long, default_value_t = 41)]
    pub points: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Classify every reference-table case instead of one set.
    #[arg(long, conflicts_with_all = ["set", "k", "d", "chi", "delta", "d_over_k", "chi_over_sqrt_k", "sqrt_k_delta"])]
    pub table: bool,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Args)]
pub struct DispersionArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub lambda_min: Option<f64>,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub length: Option<f64>,
    #[arg(long)]
    pub sites: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Particles per site at unit density.
    #[arg(long, short = 'm')]
    pub particles_per_site: Option<usize>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub snapshot_every: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Switch off birth and death.
    #[arg(long)]
    pub no_growth: bool,
    /// Switch off tumbling (free flight).
    #[arg(long)]
    pub no_tumbling: bool,
    /// Start of the spectrum averaging window (default: final quarter).
    #[arg(long)]
    pub window_start: Option<f64>,
    #[arg(long)]
    pub window_end: Option<f64>,
    #[arg(long)]
    pub window_interval: Option<f64>,
    /// Continuum lattice sites.
    #[arg(long)]
    pub ks_sites: Option<usize>,
    #[arg(long)]
    pub ks_dt: Option<f64>,
    /// Amplitude of the continuum initial perturbation.
    #[arg(long)]
    pub noise_amplitude: Option<f64>,
    /// Seed a single cosine mode instead of noise.
    #[arg(long)]
    pub initial_mode: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl RunArgs {
    /// Base config (file or defaults for `mode`) with flag overrides applied.
    pub fn resolve(&self, mode: Option<Mode>) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::new(mode.unwrap_or(Mode::McRun), ParamSpec::default()),
        };
        if let Some(m) = mode {
            cfg.mode = m;
        }
        self.params.apply(&mut cfg.params);
        let n = &mut cfg.numerics;
        macro_rules! over {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        over!(n.length, self.length);
        over!(n.sites, self.sites);
        over!(n.dt, self.dt);
        over!(n.particles_per_site, self.particles_per_site);
        over!(n.t_end, self.t_end);
        over!(n.snapshot_every, self.snapshot_every);
        over!(n.seed, self.seed);
        if self.no_growth {
            n.growth = crate::model::GrowthModel::Disabled;
        }
        if self.no_tumbling {
            n.tumbling = false;
        }
        if self.window_start.is_some() {
            cfg.spectrum.t_start = self.window_start;
        }
        if self.window_end.is_some() {
            cfg.spectrum.t_end = self.window_end;
        }
        over!(cfg.spectrum.interval, self.window_interval);
        if self.ks_sites.is_some() {
            cfg.continuum.sites = self.ks_sites;
        }
        if self.ks_dt.is_some() {
            cfg.continuum.dt = self.ks_dt;
        }
        over!(cfg.continuum.noise_amplitude, self.noise_amplitude);
        if self.initial_mode.is_some() {
            cfg.continuum.initial_mode = self.initial_mode;
        }
        if let Some(f) = self.output.format {
            cfg.output.format = match f {
                FormatArg::Csv => OutputFormat::Csv,
                FormatArg::Binary => OutputFormat::Binary,
            };
        }
        if let Some(dir) = &self.output.out {
            cfg.output.dir = Some(dir.clone());
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Snapshot file written by mc-run or ks-run.
    #[arg(long)]
    pub input: PathBuf,
    /// Run config; defaults to the CSV header or a sibling config.toml.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub window_start: Option<f64>,
    #[arg(long)]
    pub window_end: Option<f64>,
    #[arg(long)]
    pub window_interval: Option<f64>,
    /// Also write the long-form space-time table.
    #[arg(long)]
    pub spacetime: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    /// Debug hook: diffusion constant handed to the continuum integrator.
    #[arg(long, hide = true)]
    pub diffusion: Option<f64>,
}

/// Failure carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Aborted(_) | Error::NonPositiveField { .. } | Error::Io(_) => EXIT_RUNTIME,
            _ => EXIT_VALIDATION,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parse `args`, run, and return the exit code. Output goes to `stdout`.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    match dispatch(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> CliResult<u8> {
    match cmd {
        Command::StabilityDiagram(a) => stability_diagram(&a, out),
        Command::Classify(a) => classify_cmd(&a, out),
        Command::Dispersion(a) => dispersion(&a, out),
        Command::McRun(a) => simulate(&a.resolve(Some(Mode::McRun))?, out),
        Command::KsRun(a) => simulate(&a.resolve(Some(Mode::KsRun))?, out),
        Command::Spectrum(a) => spectrum_cmd(&a, out),
        Command::Verify(a) => verify_cmd(&a, out),
        Command::Run(a) => {
            if a.config.is_none() {
                return Err(Error::Config("run needs --config".into()).into());
            }
            let cfg = a.resolve(None)?;
            match cfg.mode {
                Mode::McRun | Mode::KsRun => simulate(&cfg, out),
                Mode::StabilityDiagram => stability_diagram(
                    &DiagramArgs {
                        k: vec![0.1, 1.0, 2.0, 10.0],
                        d_over_k_min: 0.1,
                        d_over_k_max: 10.0,
                        points: 41,
                        output: OutputArgs {
                            out: cfg.output.dir.clone(),
                            format: None,
                        },
                    },
                    out,
                ),
                Mode::Dispersion => {
                    dispersion_for(&cfg.model()?, None, None, 200, &output_dir(&cfg), out)
                }
                Mode::Verify => verify_cmd(
                    &VerifyArgs {
                        draws: 1000,
                        diffusion: None,
                    },
                    out,
                ),
                Mode::Spectrum => Err(Error::Config(
                    "spectrum mode needs an input file; use the spectrum subcommand".into(),
                )
                .into()),
            }
        }
    }
}

fn output_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output
        .dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn threads() -> usize {
    rayon::current_num_threads()
}

/// Header text embedded in every output: tool line, thread count, seed,
/// then the resolved config after a `---` marker.
pub fn header(cfg: &RunConfig) -> CliResult<String> {
    Ok(format!(
        "chemokin {}\nthreads = {}\nseed = {}\n{CONFIG_MARK}\n{}",
        env!("CARGO_PKG_VERSION"),
        threads(),
        cfg.numerics.seed,
        cfg.to_toml()?
    ))
}

/// Header for outputs that depend only on command-line arguments.
fn plain_header(what: &str) -> String {
    format!(
        "chemokin {}\nthreads = {}\n{what}",
        env!("CARGO_PKG_VERSION"),
        threads()
    )
}

/// Recover the config embedded in a CSV header, if any.
pub fn embedded_config(path: &Path) -> CliResult<Option<RunConfig>> {
    use std::io::BufRead;
    let mut toml = String::new();
    let mut inside = false;
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let Some(body) = line.strip_prefix('#') else {
            break;
        };
        let body = body.strip_prefix(' ').unwrap_or(body);
        if inside {
            toml.push_str(body);
            toml.push('\n');
        } else if body == CONFIG_MARK {
            inside = true;
        }
    }
    Ok(if inside {
        Some(RunConfig::parse(&toml)?)
    } else {
        None
    })
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn stability_diagram(a: &DiagramArgs, out: &mut dyn Write) -> CliResult<u8> {
    if !(a.d_over_k_min > 0.0 && a.d_over_k_max >= a.d_over_k_min)
        || a.points == 0
        || a.k.is_empty()
    {
        return Err(Error::InvalidParameter(
            "need 0 < d_over_k_min <= d_over_k_max, points >= 1 and k values".into(),
        )
        .into());
    }
    let grid = log_grid(a.d_over_k_min, a.d_over_k_max, a.points);
    let curve = critical_curve(&a.k, &grid)?;
    let dir = a.output.dir(None);
    let hdr = plain_header(&format!(
        "k = {:?}\nd_over_k = [{}, {}] x {}",
        a.k, a.d_over_k_min, a.d_over_k_max, a.points
    ));
    let mut w = create(&dir, "critical_curve.csv")?;
    write_header(&mut w, &hdr)?;
    writeln!(w, "k,d_over_k,d,lambda_argmin,critical_stiffness")?;
    for p in &curve {
        writeln!(
            w,
            "{},{},{},{},{}",
            p.k,
            p.d / p.k,
            p.d,
            p.argmin_lambda,
            p.critical_stiffness
        )?;
    }
    w.flush()?;
    let mut w = create(&dir, "continuum_threshold.csv")?;
    write_header(&mut w, &hdr)?;
    writeln!(w, "d_hat,critical_stiffness")?;
    for (d, t) in threshold_curve(&grid) {
        writeln!(w, "{d},{t}")?;
    }
    w.flush()?;
    writeln!(
        out,
        "wrote {} curve points to {}",
        curve.len(),
        dir.display()
    )?;
    Ok(EXIT_OK)
}

fn fmt_opt_pair(v: Option<(f64, f64)>) -> String {
    v.map_or_else(|| "none".into(), |(a, b)| format!("{a},{b}"))
}

fn classify_cmd(a: &ClassifyArgs, out: &mut dyn Write) -> CliResult<u8> {
    if a.table {
        writeln!(
            out,
            "set,k,stiffness_ratio,critical_stiffness,unstable,expected"
        )?;
        let mut all = true;
        for case in TABLE_CASES {
            let p = crate::model::named_set(case.set)
                .expect("table set")
                .to_model(case.k)?;
            let c = classify(&p)?;
            all &= c.unstable == case.unstable;
            writeln!(
                out,
                "{},{},{},{},{},{}",
                case.set,
                case.k,
                c.stiffness_ratio,
                c.critical.critical_stiffness,
                c.unstable,
                case.unstable
            )?;
        }
        return Ok(if all { EXIT_OK } else { EXIT_VERIFY });
    }
    let p = a.params.resolve()?;
    let c = classify(&p)?;
    writeln!(
        out,
        "k = {}\nd = {}\nchi = {}\ndelta = {}",
        p.k, p.d, p.chi, p.delta
    )?;
    writeln!(out, "stiffness_ratio = {}", c.stiffness_ratio)?;
    writeln!(
        out,
        "critical_stiffness = {}",
        c.critical.critical_stiffness
    )?;
    writeln!(out, "critical_lambda = {}", c.critical.argmin_lambda)?;
    writeln!(out, "unstable = {}", c.unstable)?;
    writeln!(out, "band = {}", fmt_opt_pair(c.band))?;
    writeln!(out, "most_unstable = {}", fmt_opt_pair(c.most_unstable))?;
    Ok(EXIT_OK)
}

fn dispersion(a: &DispersionArgs, out: &mut dyn Write) -> CliResult<u8> {
    let p = a.params.resolve()?;
    dispersion_for(
        &p,
        a.lambda_min,
        a.lambda_max,
        a.points,
        &a.output.dir(None),
        out,
    )
}

fn dispersion_for(
    p: &ModelParams,
    lo: Option<f64>,
    hi: Option<f64>,
    points: usize,
    dir: &Path,
    out: &mut dyn Write,
) -> CliResult<u8> {
    let scale = p.k.sqrt();
    let lo = lo.unwrap_or(1e-2 / scale);
    let hi = hi.unwrap_or_else(|| crate::kinetic::band_bound(p).map_or(10.0 / scale, |b| 3.0 * b));
    if !(lo > 0.0 && hi >= lo) || points == 0 {
        return Err(Error::InvalidParameter(format!(
            "bad wavenumber range [{lo}, {hi}] x {points}"
        ))
        .into());
    }
    let cp = ContinuumParams::from_kinetic(p)?;
    let cfg = RunConfig::new(Mode::Dispersion, ParamSpec::physical(p));
    let mut w = create(dir, "dispersion.csv")?;
    write_header(&mut w, &header(&cfg)?)?;
    writeln!(w, "lambda,mu1,unstable,mu_continuum")?;
    for l in log_grid(lo, hi, points) {
        let g = growth_rate(l, p)?;
        let mu = g.mu1.map_or(String::new(), |m| m.to_string());
        writeln!(
            w,
            "{l},{mu},{},{}",
            g.unstable,
            continuum::continuum_growth_rate(l * scale, &cp)
        )?;
    }
    w.flush()?;
    writeln!(
        out,
        "wrote {points} wavenumbers to {}",
        dir.join("dispersion.csv").display()
    )?;
    Ok(EXIT_OK)
}

/// Outcome of the spectral analysis of a run, written as `summary.toml`.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub solver: String,
    pub snapshots: usize,
    pub t_final: f64,
    pub window: [f64; 3],
    pub lambda_max: f64,
    pub plateau_median: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_mode: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_prominence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_mode: Option<f64>,
    pub final_min: f64,
    pub final_max: f64,
    pub final_class: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_particles: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clamped: Option<usize>,
}

struct RunGeometry {
    kind: SolverKind,
    dx: f64,
    length: f64,
    k: f64,
    lambda_max: f64,
    predicted: Option<f64>,
}

fn geometry(cfg: &RunConfig, kind: SolverKind, sites: usize) -> CliResult<RunGeometry> {
    let p = cfg.model()?;
    let cp = ContinuumParams::from_kinetic(&p)?;
    let kinetic_lambda = continuum::most_unstable_mode(&cp)
        .ok()
        .map(|l| l / p.k.sqrt());
    let g = match kind {
        SolverKind::Mc => {
            let length = cfg.numerics.length;
            let dx = length / sites as f64;
            RunGeometry {
                kind,
                dx,
                length,
                k: p.k,
                lambda_max: peak_search_bound(&p, dx),
                predicted: kinetic_lambda,
            }
        }
        SolverKind::Ks => {
            let length = cfg.numerics.length / p.k.sqrt();
            let dx = length / sites as f64;
            let nyquist = std::f64::consts::PI / dx;
            let bound =
                crate::kinetic::band_bound(&p).map_or(nyquist, |b| (b * p.k.sqrt()).min(nyquist));
            RunGeometry {
                kind,
                dx,
                length,
                k: p.k,
                lambda_max: bound,
                predicted: continuum::most_unstable_mode(&cp).ok(),
            }
        }
    };
    Ok(g)
}

fn analyse(
    cfg: &RunConfig,
    geo: &RunGeometry,
    snaps: &[Snapshot],
    clamped: Option<usize>,
    dir: &Path,
    hdr: &str,
) -> CliResult<Summary> {
    let last = snaps
        .last()
        .ok_or_else(|| Error::EmptySelection("no snapshots".into()))?;
    let (t0, t1, dt) = cfg.spectrum.resolve(last.t);
    let spec = time_averaged_spectrum(snaps, t0, t1, dt, geo.dx, geo.k)?;
    let peak = detect_first_peak(&spec, geo.lambda_max);
    let mut w = create(dir, "spectrum.csv")?;
    write_header(&mut w, hdr)?;
    writeln!(w, "mode,lambda,power")?;
    for (n, (l, p)) in spec.wavenumbers.iter().zip(&spec.power).enumerate() {
        writeln!(w, "{n},{l},{p}")?;
    }
    w.flush()?;
    let mut w = create(dir, "metrics.csv")?;
    write_header(&mut w, hdr)?;
    writeln!(w, "t,min,max,class,particles")?;
    for s in snaps {
        let m = pattern_metrics(&s.rho)?;
        let n = s.particles.map_or(String::new(), |n| n.to_string());
        writeln!(w, "{},{},{},{},{n}", s.t, m.min, m.max, m.class)?;
    }
    w.flush()?;
    let fin = pattern_metrics(&last.rho)?;
    let to_mode = |l: f64| l * geo.length / (2.0 * std::f64::consts::PI);
    let summary = Summary {
        solver: geo.kind.tag().into(),
        snapshots: snaps.len(),
        t_final: last.t,
        window: [t0, t1, dt],
        lambda_max: geo.lambda_max,
        plateau_median: spec.plateau_median(),
        peak_mode: peak.map(|p| p.index),
        peak_lambda: peak.map(|p| p.lambda),
        peak_prominence: peak.map(|p| p.prominence),
        predicted_mode: geo.predicted.map(to_mode),
        final_min: fin.min,
        final_max: fin.max,
        final_class: fin.class.to_string(),
        final_particles: last.particles,
        clamped,
    };
    let text = toml::to_string(&summary).map_err(|e| Error::Format(e.to_string()))?;
    let mut w = create(dir, "summary.toml")?;
    write_header(&mut w, hdr)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(summary)
}

enum SnapshotSink {
    Csv(CsvSnapshotWriter<BufWriter<File>>),
    Binary(BinarySnapshotWriter<BufWriter<File>>),
}

impl SnapshotSink {
    fn open(
        cfg: &RunConfig,
        dir: &Path,
        kind: SolverKind,
        sites: usize,
        dx: f64,
        dt: f64,
        hdr: &str,
    ) -> CliResult<Self> {
        Ok(match cfg.output.format {
            OutputFormat::Csv => Self::Csv(CsvSnapshotWriter::new(
                create(dir, "density.csv")?,
                kind,
                dx,
                hdr,
            )?),
            OutputFormat::Binary => Self::Binary(BinarySnapshotWriter::new(
                create(dir, "density.bin")?,
                kind,
                sites,
                dx,
                dt,
            )?),
        })
    }

    fn write(&mut self, s: &Snapshot) -> Result<(), Error> {
        match self {
            Self::Csv(w) => Ok(w.write(s)?),
            Self::Binary(w) => w.write(s),
        }
    }

    fn finish(self) -> Result<(), Error> {
        match self {
            Self::Csv(w) => w.finish().map(drop).map_err(Error::from),
            Self::Binary(w) => w.finish().map(drop),
        }
    }
}

fn write_config(dir: &Path, cfg: &RunConfig) -> CliResult {
    let mut w = create(dir, "config.toml")?;
    write_header(
        &mut w,
        &plain_header(&format!("seed = {}", cfg.numerics.seed)),
    )?;
    w.write_all(cfg.to_toml()?.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Run the particle or continuum solver described by `cfg` and analyse it.
pub fn simulate(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<u8> {
    let dir = output_dir(cfg);
    let hdr = header(cfg)?;
    let mut snaps = Vec::new();
    let (geo, clamped) = match cfg.mode {
        Mode::McRun => {
            let mc = cfg.mc_config()?;
            let geo = geometry(cfg, SolverKind::Mc, mc.sites)?;
            write_config(&dir, cfg)?;
            let mut sink =
                SnapshotSink::open(cfg, &dir, SolverKind::Mc, mc.sites, geo.dx, mc.dt, &hdr)?;
            run_with(&mc, |s| {
                info!("t = {:.3}, particles = {}", s.t, s.particles.unwrap_or(0));
                sink.write(s)?;
                snaps.push(s.clone());
                Ok(())
            })?;
            sink.finish()?;
            (geo, None)
        }
        Mode::KsRun => {
            let ks = cfg.ks_config()?;
            let geo = geometry(cfg, SolverKind::Ks, ks.sites)?;
            write_config(&dir, cfg)?;
            let mut sink =
                SnapshotSink::open(cfg, &dir, SolverKind::Ks, ks.sites, geo.dx, ks.dt, &hdr)?;
            let clamped = ks_run_with(&ks, |s| {
                info!("t = {:.3}", s.t);
                sink.write(s)?;
                snaps.push(s.clone());
                Ok(())
            })?;
            sink.finish()?;
            (geo, Some(clamped))
        }
        m => return Err(Error::Config(format!("mode {m:?} is not a simulation")).into()),
    };
    let summary = analyse(cfg, &geo, &snaps, clamped, &dir, &hdr)?;
    print_summary(&summary, out)?;
    Ok(EXIT_OK)
}

fn print_summary(s: &Summary, out: &mut dyn Write) -> CliResult {
    let text = toml::to_string(s).map_err(|e| Error::Format(e.to_string()))?;
    out.write_all(text.as_bytes())?;
    Ok(())
}

fn spectrum_cmd(a: &SpectrumArgs, out: &mut dyn Write) -> CliResult<u8> {
    let binary = a.input.extension().is_some_and(|e| e == "bin");
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => {
            let embedded = if binary {
                None
            } else {
                embedded_config(&a.input)?
            };
            match embedded {
                Some(c) => c,
                None => {
                    let sibling = a.input.with_file_name("config.toml");
                    RunConfig::load(&sibling).map_err(|e| {
                        Error::Config(format!(
                            "no config given and {} unreadable: {e}",
                            sibling.display()
                        ))
                    })?
                }
            }
        }
    };
    if a.window_start.is_some() {
        cfg.spectrum.t_start = a.window_start;
    }
    if a.window_end.is_some() {
        cfg.spectrum.t_end = a.window_end;
    }
    if let Some(i) = a.window_interval {
        cfg.spectrum.interval = i;
    }
    let file = BufReader::new(File::open(&a.input)?);
    let (kind, snaps) = if binary {
        let (h, s) = read_binary(file)?;
        (h.kind, s)
    } else {
        read_csv(file)?
    };
    let sites = snaps.first().map_or(0, |s| s.rho.len());
    let geo = geometry(&cfg, kind, sites)?;
    let dir = a.output.dir(a.input.parent());
    let hdr = header(&cfg)?;
    let summary = analyse(&cfg, &geo, &snaps, None, &dir, &hdr)?;
    if a.spacetime {
        let mut w = create(&dir, "spacetime.csv")?;
        write_header(&mut w, &hdr)?;
        writeln!(w, "t,x,rho")?;
        for r in spacetime_map(&snaps, geo.dx)? {
            writeln!(w, "{},{},{}", r.t, r.x, r.rho)?;
        }
        w.flush()?;
    }
    print_summary(&summary, out)?;
    Ok(EXIT_OK)
}

fn verify_cmd(a: &VerifyArgs, out: &mut dyn Write) -> CliResult<u8> {
    let mut opts = VerifyOptions {
        dispersion_draws: a.draws,
        ..Default::default()
    };
    if let Some(c) = a.diffusion {
        opts.diffusion = c;
    }
    let checks = run_checks(&opts);
    writeln!(out, "check,status,detail")?;
    for c in &checks {
        let status = if c.passed { "pass" } else { "fail" };
        writeln!(
            out,
            "{},{status},\"{}\"",
            c.name,
            c.detail.replace('"', "'")
        )?;
    }
    Ok(if checks.iter().all(|c| c.passed) {
        EXIT_OK
    } else {
        EXIT_VERIFY
    })
}
