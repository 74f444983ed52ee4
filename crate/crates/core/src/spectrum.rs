//! Density power spectra and pattern diagnostics.
//!
//! Convention: `rho_hat(lambda_n) = dx * sum_j (rho_j - mean) exp(-i lambda_n x_j)`
//! with `lambda_n = 2 pi n / L`, `n = 0..=I/2`, and power `|rho_hat|^2 / k`.
//! The mean is removed, so `power[0]` is always zero.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};

use crate::error::{ensure, Error, Result};
use crate::kinetic::band_bound;
use crate::model::ModelParams;
use crate::snapshot::Snapshot;

/// A local maximum must exceed this multiple of the plateau median.
pub const MIN_PROMINENCE: f64 = 2.0;
pub const OSCILLATORY_MIN: f64 = 0.5;
pub const SPIKE_MIN: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub wavenumbers: Vec<f64>,
    pub power: Vec<f64>,
    /// `(t_start, t_end, interval)` for time averages.
    pub window: Option<(f64, f64, f64)>,
}

impl SpectrumResult {
    /// Median power over the upper half of the stored wavenumbers.
    pub fn plateau_median(&self) -> f64 {
        let lo = self.power.len() / 2;
        median(&self.power[lo..])
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Reusable transform for one lattice size.
pub struct Spectrometer {
    fft: Arc<dyn Fft<f64>>,
    sites: usize,
    dx: f64,
    k: f64,
}

impl Spectrometer {
    pub fn new(sites: usize, dx: f64, k: f64) -> Result<Self> {
        ensure(sites >= 8, || {
            format!("spectrum needs at least 8 sites, got {sites}")
        })?;
        ensure(dx > 0.0 && dx.is_finite(), || {
            format!("dx must be > 0, got {dx}")
        })?;
        ensure(k > 0.0 && k.is_finite(), || {
            format!("k must be > 0, got {k}")
        })?;
        let fft = FftPlanner::new().plan_fft_forward(sites);
        Ok(Self { fft, sites, dx, k })
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        let l = self.sites as f64 * self.dx;
        (0..=self.sites / 2)
            .map(|n| 2.0 * std::f64::consts::PI * n as f64 / l)
            .collect()
    }

    pub fn power(&self, rho: &[f64]) -> Result<Vec<f64>> {
        ensure(rho.len() == self.sites, || {
            format!("density has {} sites, expected {}", rho.len(), self.sites)
        })?;
        if rho.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("density"));
        }
        let mean = rho.iter().sum::<f64>() / self.sites as f64;
        let mut buf: Vec<Complex<f64>> = rho.iter().map(|&r| Complex::new(r - mean, 0.0)).collect();
        self.fft.process(&mut buf);
        // the half-cell offset of x_j only changes the phase
        let mut p: Vec<f64> = buf[..=self.sites / 2]
            .iter()
            .map(|c| c.norm_sqr() * self.dx * self.dx / self.k)
            .collect();
        p[0] = 0.0;
        Ok(p)
    }

    pub fn spectrum(&self, rho: &[f64]) -> Result<SpectrumResult> {
        Ok(SpectrumResult {
            wavenumbers: self.wavenumbers(),
            power: self.power(rho)?,
            window: None,
        })
    }
}

pub fn power_spectrum(density: &[f64], dx: f64, k: f64) -> Result<SpectrumResult> {
    Spectrometer::new(density.len(), dx, k)?.spectrum(density)
}

/// Smallest positive spacing between snapshot times.
fn cadence(snapshots: &[Snapshot]) -> Option<f64> {
    let mut t: Vec<f64> = snapshots.iter().map(|s| s.t).collect();
    t.sort_by(f64::total_cmp);
    t.windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&d| d > 0.0)
        .min_by(f64::total_cmp)
}

/// Indices of the snapshots nearest to `t_start, t_start + interval, ...`
/// up to `t_end`, keeping only matches within half the snapshot cadence.
pub fn select_snapshots(
    snapshots: &[Snapshot],
    t_start: f64,
    t_end: f64,
    interval: f64,
) -> Result<Vec<usize>> {
    ensure(interval > 0.0 && interval.is_finite(), || {
        format!("interval must be > 0, got {interval}")
    })?;
    ensure(t_end >= t_start, || {
        format!("window [{t_start}, {t_end}] is empty")
    })?;
    let tol = match cadence(snapshots) {
        Some(c) => 0.5 * c,
        None => 0.5 * interval,
    };
    let count = ((t_end - t_start) / interval + 1e-9).floor() as usize + 1;
    let mut picked: Vec<usize> = Vec::new();
    for j in 0..count {
        let want = t_start + j as f64 * interval;
        let best = snapshots
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.t - want).abs().total_cmp(&(b.1.t - want).abs()));
        if let Some((i, s)) = best {
            if (s.t - want).abs() <= tol * (1.0 + 1e-9) && !picked.contains(&i) {
                picked.push(i);
            }
        }
    }
    if picked.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no snapshot within the window [{t_start}, {t_end}] at interval {interval}"
        )));
    }
    Ok(picked)
}

/// Mean of per-snapshot power spectra over the selected times.
pub fn time_averaged_spectrum(
    snapshots: &[Snapshot],
    t_start: f64,
    t_end: f64,
    interval: f64,
    dx: f64,
    k: f64,
) -> Result<SpectrumResult> {
    let picked = select_snapshots(snapshots, t_start, t_end, interval)?;
    let sites = snapshots[picked[0]].rho.len();
    let sm = Spectrometer::new(sites, dx, k)?;
    let powers = picked
        .par_iter()
        .map(|&i| sm.power(&snapshots[i].rho))
        .collect::<Result<Vec<_>>>()?;
    let inv = 1.0 / powers.len() as f64;
    let mut mean = vec![0.0; sites / 2 + 1];
    for p in &powers {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v * inv;
        }
    }
    Ok(SpectrumResult {
        wavenumbers: sm.wavenumbers(),
        power: mean,
        window: Some((t_start, t_end, interval)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub lambda: f64,
    pub power: f64,
    /// Peak power over the plateau median.
    pub prominence: f64,
}

/// Largest local maximum with `0 < lambda < lambda_max`, reported only if
/// it stands at least [`MIN_PROMINENCE`] times above the plateau median.
pub fn detect_first_peak(spec: &SpectrumResult, lambda_max: f64) -> Option<Peak> {
    let p = &spec.power;
    let n = p.len();
    if n < 3 {
        return None;
    }
    let plateau = spec.plateau_median();
    let best = (1..n - 1)
        .filter(|&i| spec.wavenumbers[i] > 0.0 && spec.wavenumbers[i] < lambda_max)
        .filter(|&i| p[i] > p[i - 1] && p[i] >= p[i + 1])
        .max_by(|&a, &b| p[a].total_cmp(&p[b]))?;
    let prominence = if plateau > 0.0 {
        p[best] / plateau
    } else {
        f64::INFINITY
    };
    (prominence >= MIN_PROMINENCE).then_some(Peak {
        index: best,
        lambda: spec.wavenumbers[best],
        power: p[best],
        prominence,
    })
}

/// Upper end of the peak search: the kinetic band bound when it exists,
/// otherwise the Nyquist wavenumber.
pub fn peak_search_bound(p: &ModelParams, dx: f64) -> f64 {
    let nyquist = std::f64::consts::PI / dx;
    band_bound(p).map_or(nyquist, |b| b.min(nyquist))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacetimeRow {
    pub t: f64,
    pub x: f64,
    pub rho: f64,
}

/// Long-form `(t, x, rho)` table sorted by time then position.
pub fn spacetime_map(snapshots: &[Snapshot], dx: f64) -> Result<Vec<SpacetimeRow>> {
    ensure(snapshots.len() >= 2, || {
        format!("need at least 2 snapshots, got {}", snapshots.len())
    })?;
    let mut order: Vec<&Snapshot> = snapshots.iter().collect();
    order.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(order
        .into_iter()
        .flat_map(|s| {
            s.rho.iter().enumerate().map(move |(i, &rho)| SpacetimeRow {
                t: s.t,
                x: (i as f64 + 0.5) * dx,
                rho,
            })
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternClass {
    Oscillatory,
    Intermediate,
    Spike,
}

impl PatternClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            PatternClass::Oscillatory => "oscillatory",
            PatternClass::Intermediate => "intermediate",
            PatternClass::Spike => "spike",
        }
    }
}

impl std::fmt::Display for PatternClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternMetrics {
    pub min: f64,
    pub max: f64,
    pub class: PatternClass,
}

pub fn pattern_metrics(rho: &[f64]) -> Result<PatternMetrics> {
    ensure(!rho.is_empty(), || "empty density profile".into())?;
    let min = rho.iter().copied().fold(f64::INFINITY, f64::min);
    let max = rho.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let class = if min > OSCILLATORY_MIN {
        PatternClass::Oscillatory
    } else if min < SPIKE_MIN {
        PatternClass::Spike
    } else {
        PatternClass::Intermediate
    };
    Ok(PatternMetrics { min, max, class })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// Direct O(I^2) transform in the stated convention.
    fn direct_power(rho: &[f64], dx: f64, k: f64) -> Vec<f64> {
        let n = rho.len();
        let l = n as f64 * dx;
        let mean = rho.iter().sum::<f64>() / n as f64;
        (0..=n / 2)
            .map(|m| {
                if m == 0 {
                    return 0.0;
                }
                let lam = 2.0 * PI * m as f64 / l;
                let (mut re, mut im) = (0.0, 0.0);
                for (j, r) in rho.iter().enumerate() {
                    let x = (j as f64 + 0.5) * dx;
                    re += dx * (r - mean) * (lam * x).cos();
                    im -= dx * (r - mean) * (lam * x).sin();
                }
                (re * re + im * im) / k
            })
            .collect()
    }

    fn snap(t: f64, rho: Vec<f64>) -> Snapshot {
        Snapshot {
            t,
            rho,
            particles: None,
        }
    }

    #[test]
    fn uniform_has_no_power() {
        let s = power_spectrum(&[1.7; 64], 0.1, 1.0).unwrap();
        assert_eq!(s.wavenumbers.len(), 33);
        assert!(s.power.iter().all(|&p| p < 1e-28));
    }

    #[test]
    fn pure_cosine() {
        let (n, dx, k, a, m) = (200, 0.05, 0.1, 0.3, 7);
        let l = n as f64 * dx;
        let rho: Vec<f64> = (0..n)
            .map(|j| 1.0 + a * (2.0 * PI * m as f64 * (j as f64 + 0.5) * dx / l).cos())
            .collect();
        let s = power_spectrum(&rho, dx, k).unwrap();
        let expect = (a * l / 2.0).powi(2) / k;
        assert!((s.power[m] / expect - 1.0).abs() < 1e-12);
        for (i, &p) in s.power.iter().enumerate() {
            if i != m {
                assert!(p < 1e-20 * expect);
            }
        }
        assert!((s.wavenumbers[m] - 2.0 * PI * m as f64 / l).abs() < 1e-12);
    }

    #[test]
    fn matches_direct_transform() {
        let rho: Vec<f64> = (0..101).map(|j| ((j * 7919) % 97) as f64 / 50.0).collect();
        let fast = power_spectrum(&rho, 0.07, 0.3).unwrap().power;
        let slow = direct_power(&rho, 0.07, 0.3);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10 * (1.0 + b));
        }
    }

    #[test]
    fn parseval() {
        // sum over all n of |rho_hat|^2 = I dx^2 sum_j (rho_j - mean)^2
        let n = 64;
        let dx = 0.1;
        let rho: Vec<f64> = (0..n)
            .map(|j| (j as f64 * 0.61).sin() + 0.2 * (j as f64 * 2.3).cos())
            .collect();
        let p = power_spectrum(&rho, dx, 1.0).unwrap().power;
        let full: f64 = p[1..n / 2].iter().sum::<f64>() * 2.0 + p[n / 2];
        let mean = rho.iter().sum::<f64>() / n as f64;
        let direct: f64 = rho.iter().map(|r| (r - mean).powi(2)).sum::<f64>() * n as f64 * dx * dx;
        assert!((full / direct - 1.0).abs() < 1e-12);
    }

    #[test]
    fn averaging() {
        let a: Vec<f64> = (0..32).map(|j| 1.0 + 0.1 * (j as f64).sin()).collect();
        let b: Vec<f64> = (0..32)
            .map(|j| 1.0 + 0.3 * (j as f64 * 0.4).cos())
            .collect();
        let pa = power_spectrum(&a, 0.1, 1.0).unwrap();
        let pb = power_spectrum(&b, 0.1, 1.0).unwrap();
        let same = vec![
            snap(0.0, a.clone()),
            snap(4.0, a.clone()),
            snap(8.0, a.clone()),
        ];
        let avg = time_averaged_spectrum(&same, 0.0, 8.0, 4.0, 0.1, 1.0).unwrap();
        for (x, y) in avg.power.iter().zip(&pa.power) {
            assert!((x - y).abs() < 1e-15 * (1.0 + y));
        }
        let two = vec![snap(0.0, a), snap(4.0, b)];
        let avg = time_averaged_spectrum(&two, 0.0, 4.0, 4.0, 0.1, 1.0).unwrap();
        for i in 0..avg.power.len() {
            assert!((avg.power[i] - 0.5 * (pa.power[i] + pb.power[i])).abs() < 1e-15);
        }
        assert_eq!(avg.window, Some((0.0, 4.0, 4.0)));
    }

    #[test]
    fn selection_uses_nearest_within_half_cadence() {
        let snaps: Vec<Snapshot> = (0..11)
            .map(|j| snap(j as f64 * 2.0 + 0.3, vec![1.0; 8]))
            .collect();
        assert_eq!(
            select_snapshots(&snaps, 4.0, 12.0, 4.0).unwrap(),
            vec![2, 4, 6]
        );
        assert!(select_snapshots(&snaps, 50.0, 60.0, 4.0).is_err());
        assert!(time_averaged_spectrum(&snaps, 50.0, 60.0, 4.0, 0.1, 1.0).is_err());
        // a finer request interval than the cadence picks each snapshot once
        assert_eq!(
            select_snapshots(&snaps, 0.0, 4.0, 0.5).unwrap(),
            vec![0, 1, 2]
        );
    }

    fn synthetic(peak_at: Option<usize>) -> SpectrumResult {
        let n = 101;
        let wavenumbers: Vec<f64> = (0..n).map(|i| 0.1 * i as f64).collect();
        let mut power: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.01 * ((i * 37) % 11) as f64)
            .collect();
        power[0] = 0.0;
        if let Some(m) = peak_at {
            power[m] = 40.0;
            power[m - 1] = 10.0;
            power[m + 1] = 12.0;
        }
        SpectrumResult {
            wavenumbers,
            power,
            window: None,
        }
    }

    #[test]
    fn peak_detection() {
        let p = detect_first_peak(&synthetic(Some(17)), 5.0).unwrap();
        assert_eq!(p.index, 17);
        assert!(p.prominence > 35.0);
        assert!(detect_first_peak(&synthetic(None), 5.0).is_none());
        assert!(detect_first_peak(&synthetic(Some(70)), 5.0).is_none());
        let flat = SpectrumResult {
            wavenumbers: vec![0.0, 1.0, 2.0, 3.0],
            power: vec![1.0; 4],
            window: None,
        };
        assert!(detect_first_peak(&flat, 10.0).is_none());
    }

    #[test]
    fn cosine_over_noise_floor() {
        let (n, dx) = (400, 0.05);
        let l = n as f64 * dx;
        let rho: Vec<f64> = (0..n)
            .map(|j| {
                let x = (j as f64 + 0.5) * dx;
                1.0 + 0.2 * (2.0 * PI * 9.0 * x / l).cos()
                    + 0.01 * (((j * 7919) % 101) as f64 / 50.0 - 1.0)
            })
            .collect();
        let s = power_spectrum(&rho, dx, 1.0).unwrap();
        assert_eq!(detect_first_peak(&s, PI / dx).unwrap().index, 9);
    }

    #[test]
    fn search_bound() {
        let b = crate::model::SET_B.to_model(0.1).unwrap();
        assert!((peak_search_bound(&b, 0.05) - (7.0f64 / 0.1).sqrt()).abs() < 1e-12);
        let flat = ModelParams::new(1.0, 1.0, 0.0, 0.1).unwrap();
        assert!((peak_search_bound(&flat, 0.05) - PI / 0.05).abs() < 1e-12);
    }

    #[test]
    fn spacetime_table() {
        let snaps = vec![
            snap(1.0, vec![3.0, 4.0, 5.0]),
            snap(0.0, vec![0.5, 1.0, 1.5]),
        ];
        let rows = spacetime_map(&snaps, 0.5).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(
            rows[0],
            SpacetimeRow {
                t: 0.0,
                x: 0.25,
                rho: 0.5
            }
        );
        assert_eq!(
            rows[5],
            SpacetimeRow {
                t: 1.0,
                x: 1.25,
                rho: 5.0
            }
        );
        for w in rows.windows(2) {
            assert!((w[0].t, w[0].x) < (w[1].t, w[1].x));
        }
        assert!(spacetime_map(&snaps[..1], 0.5).is_err());
    }

    #[test]
    fn metrics_classes() {
        let m = pattern_metrics(&[1.0; 10]).unwrap();
        assert_eq!(
            (m.min, m.max, m.class),
            (1.0, 1.0, PatternClass::Oscillatory)
        );
        let spikes: Vec<f64> = (0..10)
            .map(|i| if i % 2 == 0 { 0.05 } else { 3.0 })
            .collect();
        assert_eq!(pattern_metrics(&spikes).unwrap().class, PatternClass::Spike);
        assert_eq!(
            pattern_metrics(&[0.3, 1.7]).unwrap().class,
            PatternClass::Intermediate
        );
        assert!(pattern_metrics(&[]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn shift_and_scale_properties(
            noise in prop::collection::vec(-1.0f64..1.0, 16..80),
            shift in 0usize..80, c in 0.1f64..10.0, scale in 0.01f64..100.0,
        ) {
            let rho: Vec<f64> = noise.iter().map(|v| 2.0 + v).collect();
            let base = power_spectrum(&rho, 0.1, 0.5).unwrap();
            let mut rot = rho.clone();
            rot.rotate_left(shift % rho.len());
            let shifted = power_spectrum(&rot, 0.1, 0.5).unwrap();
            let top = base.power.iter().fold(1e-30f64, |m, &v| m.max(v));
            for (a, b) in base.power.iter().zip(&shifted.power) {
                prop_assert!((a - b).abs() <= 1e-10 * top);
            }
            let amplified: Vec<f64> = noise.iter().map(|v| 2.0 + c * v).collect();
            let amp = power_spectrum(&amplified, 0.1, 0.5).unwrap();
            for (a, b) in base.power.iter().zip(&amp.power) {
                prop_assert!((c * c * a - b).abs() <= 1e-9 * c * c * top);
            }
            let scaled = SpectrumResult {
                power: base.power.iter().map(|p| p * scale).collect(),
                ..base.clone()
            };
            let lmax = 1e9;
            prop_assert_eq!(
                detect_first_peak(&base, lmax).map(|p| p.index),
                detect_first_peak(&scaled, lmax).map(|p| p.index)
            );
        }
    }
}
