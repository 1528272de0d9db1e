//! Two-slit experiment with point slits, measurement labels and the
//! decoherence functional over coarse-grained histories.
//!
//! The amplitude to reach screen point 𝐱 through slit i is the
//! future-directed propagator θ(Δt)·Δ((Δt, 𝐱 − 𝐱ᵢ)).

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::propagator::{propagator, EpsilonSchedule, Route};
use crate::spacetime::EventVector;

/// Screen line: `offset + u·ê_axis` for u in [lo, hi], cut into bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    /// Midpoint-rule samples per bin.
    pub subsamples: usize,
    pub axis: usize,
    pub offset: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlitConfig {
    pub slits: [Vec<f64>; 2],
    pub t_slit: f64,
    pub t_screen: f64,
    pub screen: ScreenSpec,
    pub source_momentum: Vec<f64>,
    pub mass: f64,
    pub schedule: EpsilonSchedule,
    pub route: Route,
}

impl SlitConfig {
    /// D = 1, m = 4, slits at ±4, flight time 40, screen [−20, 20] in 160 bins.
    /// Uses the momentum route: same values as the λ route, roughly 15× faster.
    pub fn desk() -> Self {
        SlitConfig {
            slits: [vec![-4.0], vec![4.0]],
            t_slit: 0.0,
            t_screen: 40.0,
            screen: ScreenSpec { lo: -20.0, hi: 20.0, bins: 160, subsamples: 3, axis: 0, offset: vec![0.0] },
            source_momentum: vec![0.0],
            mass: 4.0,
            schedule: EpsilonSchedule { epsilon: 1e-2, t_max: 1e3, phase_step: 0.1 },
            route: Route::Momentum,
        }
    }

    pub fn dims(&self) -> usize {
        self.slits[0].len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        if !(1..=3).contains(&d) {
            return config(format!("slit dimension {d} unsupported"));
        }
        if self.slits[1].len() != d || self.source_momentum.len() != d || self.screen.offset.len() != d {
            return config("slits, source momentum and screen offset must share one dimension");
        }
        if self.slits[0] == self.slits[1] {
            return config("slits coincide");
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return config(format!("mass must be positive, got {}", self.mass));
        }
        if !(self.t_slit.is_finite() && self.t_screen.is_finite()) {
            return config("slit and screen times must be finite");
        }
        let s = &self.screen;
        if !(s.lo.is_finite() && s.hi.is_finite() && s.hi > s.lo) {
            return config("screen needs lo < hi");
        }
        if s.bins < 2 || s.subsamples == 0 {
            return config("screen needs at least 2 bins and 1 subsample");
        }
        if s.axis >= d {
            return config("screen axis out of range");
        }
        self.schedule.validate()
    }

    pub fn bin_width(&self) -> f64 {
        (self.screen.hi - self.screen.lo) / self.screen.bins as f64
    }

    pub fn bin_center(&self, b: usize) -> f64 {
        self.screen.lo + (b as f64 + 0.5) * self.bin_width()
    }

    /// Spatial point at screen coordinate `u`.
    pub fn screen_point(&self, u: f64) -> Vec<f64> {
        let mut x = self.screen.offset.clone();
        x[self.screen.axis] += u;
        x
    }

    /// Same geometry with the slit labels exchanged.
    pub fn swapped(&self) -> Self {
        let mut c = self.clone();
        c.slits.swap(0, 1);
        c
    }
}

/// Source amplitudes at the slits: plane-wave phases relative to the slit
/// midpoint, renormalized so |φ₁|² + |φ₂|² = 1. A slit pair perpendicular to
/// 𝐩 gives (1/√2, 1/√2).
pub fn slit_amplitudes(cfg: &SlitConfig) -> Result<(C64, C64)> {
    cfg.validate()?;
    let mid: Vec<f64> = cfg.slits[0].iter().zip(&cfg.slits[1]).map(|(a, b)| 0.5 * (a + b)).collect();
    let phase = |x: &[f64]| -> f64 { cfg.source_momentum.iter().zip(x.iter().zip(&mid)).map(|(p, (xi, m))| p * (xi - m)).sum() };
    Ok((C64::from_polar(FRAC_1_SQRT_2, phase(&cfg.slits[0])), C64::from_polar(FRAC_1_SQRT_2, phase(&cfg.slits[1]))))
}

/// Unweighted single-slit amplitudes ψᵢ(𝐱) = Δ((t_screen − t_slit, 𝐱 − 𝐱ᵢ)).
pub fn slit_propagators(cfg: &SlitConfig, x: &[f64]) -> Result<[C64; 2]> {
    let dt = cfg.t_screen - cfg.t_slit;
    if !(dt > 0.0) {
        return domain("screen must lie in the future of the slits");
    }
    if x.len() != cfg.dims() {
        return config("screen point dimension mismatch");
    }
    let amp = |slit: &[f64]| {
        let dx = EventVector::new(dt, x.iter().zip(slit).map(|(a, b)| a - b).collect());
        propagator(&dx, cfg.mass, &cfg.schedule, cfg.route)
    };
    Ok([amp(&cfg.slits[0])?, amp(&cfg.slits[1])?])
}

/// ψ(𝐱) = φ₁ψ₁(𝐱) + φ₂ψ₂(𝐱).
pub fn screen_amplitude(cfg: &SlitConfig, x: &[f64]) -> Result<C64> {
    let (p1, p2) = slit_amplitudes(cfg)?;
    let [a, b] = slit_propagators(cfg, x)?;
    Ok(p1 * a + p2 * b)
}

/// Weighted per-slit amplitudes φᵢψᵢ sampled inside every screen bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenProfile {
    pub centers: Vec<f64>,
    pub width: f64,
    /// `samples[b][k] = [φ₁ψ₁, φ₂ψ₂]` at subsample k of bin b.
    pub samples: Vec<Vec<[C64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenDistribution {
    pub centers: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// Evaluates both slit amplitudes at all subsample points, in parallel.
pub fn screen_profile(cfg: &SlitConfig) -> Result<ScreenProfile> {
    cfg.validate()?;
    let (p1, p2) = slit_amplitudes(cfg)?;
    let w = cfg.bin_width();
    let sub = cfg.screen.subsamples;
    let points: Vec<(usize, f64)> = (0..cfg.screen.bins)
        .flat_map(|b| (0..sub).map(move |k| (b, k)))
        .map(|(b, k)| (b, cfg.screen.lo + (b as f64 + (k as f64 + 0.5) / sub as f64) * w))
        .collect();
    let values: Vec<[C64; 2]> = points
        .par_iter()
        .map(|&(_, u)| {
            let [a, b] = slit_propagators(cfg, &cfg.screen_point(u))?;
            Ok([p1 * a, p2 * b])
        })
        .collect::<Result<_>>()?;
    let samples = values.chunks(sub).map(|c| c.to_vec()).collect();
    Ok(ScreenProfile { centers: (0..cfg.screen.bins).map(|b| cfg.bin_center(b)).collect(), width: w, samples })
}

fn normalized(centers: &[f64], raw: Vec<f64>) -> ScreenDistribution {
    let total: f64 = raw.iter().sum();
    ScreenDistribution { centers: centers.to_vec(), probabilities: raw.iter().map(|v| v / total).collect() }
}

impl ScreenProfile {
    fn integrate(&self, f: impl Fn(&[C64; 2]) -> f64) -> Vec<f64> {
        self.samples
            .iter()
            .map(|bin| bin.iter().map(&f).sum::<f64>() * self.width / bin.len() as f64)
            .collect()
    }

    /// Without which-slit: |φ₁ψ₁ + φ₂ψ₂|². With it: |φ₁ψ₁|² + |φ₂ψ₂|², no
    /// cross term. Both normalized over the bins.
    pub fn distribution(&self, which_slit_measured: bool) -> ScreenDistribution {
        let raw = if which_slit_measured {
            self.integrate(|s| s[0].norm_sqr() + s[1].norm_sqr())
        } else {
            self.integrate(|s| (s[0] + s[1]).norm_sqr())
        };
        normalized(&self.centers, raw)
    }

    /// Distribution with only slit `i` open.
    pub fn single_slit(&self, i: usize) -> ScreenDistribution {
        normalized(&self.centers, self.integrate(|s| s[i].norm_sqr()))
    }

    /// Bin amplitude through slit `i`: subsample mean times √width.
    pub fn bin_amplitude(&self, b: usize, i: usize) -> C64 {
        let bin = &self.samples[b];
        bin.iter().map(|s| s[i]).sum::<C64>() / bin.len() as f64 * self.width.sqrt()
    }
}

pub fn screen_distribution(cfg: &SlitConfig, which_slit_measured: bool) -> Result<ScreenDistribution> {
    Ok(screen_profile(cfg)?.distribution(which_slit_measured))
}

impl ScreenDistribution {
    /// (max − min)/(max + min) over bins whose centers satisfy |u| ≤ half_width.
    pub fn visibility(&self, half_width: f64) -> f64 {
        let vals: Vec<f64> = self.centers.iter().zip(&self.probabilities).filter(|(c, _)| c.abs() <= half_width).map(|(_, p)| *p).collect();
        let max = vals.iter().cloned().fold(f64::MIN, f64::max);
        let min = vals.iter().cloned().fold(f64::MAX, f64::min);
        (max - min) / (max + min)
    }

    /// Centers of interior bins that are strict local minima.
    pub fn minima(&self) -> Vec<f64> {
        let p = &self.probabilities;
        (1..p.len() - 1).filter(|&b| p[b] < p[b - 1] && p[b] <= p[b + 1]).map(|b| self.centers[b]).collect()
    }
}

/// Finds the screen coordinate in `[lo, hi]` where φ₁ψ₁ and φ₂ψ₂ are exactly
/// out of phase, by bisection on Im(φ₁ψ₁ / φ₂ψ₂) with Re < 0.
pub fn destructive_null(cfg: &SlitConfig, lo: f64, hi: f64) -> Result<f64> {
    let (p1, p2) = slit_amplitudes(cfg)?;
    let ratio = |u: f64| -> Result<C64> {
        let [a, b] = slit_propagators(cfg, &cfg.screen_point(u))?;
        Ok((p1 * a) / (p2 * b))
    };
    let (mut a, mut b) = (lo, hi);
    let (ra, rb) = (ratio(a)?, ratio(b)?);
    if ra.re >= 0.0 || rb.re >= 0.0 || ra.im.signum() == rb.im.signum() {
        return domain(format!("no destructive null bracketed in [{lo}, {hi}]"));
    }
    let sa = ra.im.signum();
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if ratio(m)?.im.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// One orthogonal outcome of one instrument.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeasurementLabel {
    pub instrument: String,
    pub value: usize,
}

impl MeasurementLabel {
    pub fn new(instrument: &str, value: usize) -> Self {
        MeasurementLabel { instrument: instrument.to_string(), value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseHistory {
    pub amplitude: C64,
    pub labels: Vec<MeasurementLabel>,
}

/// `conj(a)·b·Π δ(labels)`; both histories must carry the same instruments
/// in the same order.
pub fn decoherence_functional(h: &CoarseHistory, h2: &CoarseHistory) -> Result<C64> {
    if h.labels.len() != h2.labels.len() || h.labels.iter().zip(&h2.labels).any(|(a, b)| a.instrument != b.instrument) {
        return config("histories are labeled by different instrument sets");
    }
    if h.labels.iter().zip(&h2.labels).any(|(a, b)| a.value != b.value) {
        return Ok(C64::new(0.0, 0.0));
    }
    Ok(h.amplitude.conj() * h2.amplitude)
}

/// Row-major matrix of the functional over all pairs.
pub fn decoherence_matrix(histories: &[CoarseHistory]) -> Result<Vec<Vec<C64>>> {
    histories.iter().map(|a| histories.iter().map(|b| decoherence_functional(a, b)).collect()).collect()
}

pub const SLIT_INSTRUMENT: &str = "slit";
pub const SCREEN_INSTRUMENT: &str = "screen";

/// Histories "through slit i, landing in bin b". With which-slit detection
/// each carries both labels; without it only the screen label, so the two
/// paths into one bin share labels and interfere.
pub fn slit_histories(profile: &ScreenProfile, which_slit_measured: bool) -> Vec<CoarseHistory> {
    let mut out = Vec::with_capacity(2 * profile.centers.len());
    for b in 0..profile.centers.len() {
        for i in 0..2 {
            let mut labels = Vec::new();
            if which_slit_measured {
                labels.push(MeasurementLabel::new(SLIT_INSTRUMENT, i));
            }
            labels.push(MeasurementLabel::new(SCREEN_INSTRUMENT, b));
            out.push(CoarseHistory { amplitude: profile.bin_amplitude(b, i), labels });
        }
    }
    out
}
