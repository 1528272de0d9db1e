//! Two-path stationary-phase model of the two-slit screen: each slit
//! contributes τ^{-1/2} e^{−imτ}, τ the proper time from slit to screen point.

use num_complex::Complex64 as C64;

use crate::history::{slit_amplitudes, SlitConfig};
use crate::error::Result;

fn proper_time(cfg: &SlitConfig, slit: usize, u: f64) -> f64 {
    let dt = cfg.t_screen - cfg.t_slit;
    let x = cfg.screen_point(u);
    let r2: f64 = x.iter().zip(&cfg.slits[slit]).map(|(a, b)| (a - b).powi(2)).sum();
    (dt * dt - r2).sqrt()
}

/// Model amplitudes `[φ₁A₁, φ₂A₂]` at screen coordinate `u`.
pub fn model_paths(cfg: &SlitConfig, u: f64) -> Result<[C64; 2]> {
    let (p1, p2) = slit_amplitudes(cfg)?;
    let a = |i: usize| {
        let tau = proper_time(cfg, i, u);
        C64::from_polar(tau.powf(-0.5), -cfg.mass * tau)
    };
    Ok([p1 * a(0), p2 * a(1)])
}

/// Phase of path 1 minus path 2, unwrapped (continuous in u).
pub fn model_phase_difference(cfg: &SlitConfig, u: f64) -> Result<f64> {
    let (p1, p2) = slit_amplitudes(cfg)?;
    Ok(-cfg.mass * (proper_time(cfg, 0, u) - proper_time(cfg, 1, u)) + (p1 / p2).arg())
}

/// Screen coordinates where the model phase difference is an odd multiple of π.
pub fn model_nulls(cfg: &SlitConfig) -> Result<Vec<f64>> {
    let (lo, hi) = (cfg.screen.lo, cfg.screen.hi);
    let steps = 20 * cfg.screen.bins;
    let h = (hi - lo) / steps as f64;
    let g = |u: f64| -> Result<f64> {
        let d = model_phase_difference(cfg, u)?;
        Ok((d - std::f64::consts::PI) / (2.0 * std::f64::consts::PI))
    };
    let mut out = Vec::new();
    let mut prev = g(lo)?;
    for k in 1..=steps {
        let u = lo + k as f64 * h;
        let cur = g(u)?;
        if prev.floor() != cur.floor() {
            // One crossing of the integer level between the two samples.
            let level = prev.floor().max(cur.floor());
            let (mut a, mut b) = (u - h, u);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if (g(m)? >= level) == (prev >= level) {
                    a = m;
                } else {
                    b = m;
                }
            }
            out.push(0.5 * (a + b));
        }
        prev = cur;
    }
    Ok(out)
}

/// Model distribution without which-slit detection, with the same bins and
/// subsamples as the production code.
pub fn model_distribution(cfg: &SlitConfig) -> Result<Vec<f64>> {
    let w = cfg.bin_width();
    let sub = cfg.screen.subsamples;
    let mut raw = Vec::with_capacity(cfg.screen.bins);
    for b in 0..cfg.screen.bins {
        let mut acc = 0.0;
        for k in 0..sub {
            let u = cfg.screen.lo + (b as f64 + (k as f64 + 0.5) / sub as f64) * w;
            let [a, c] = model_paths(cfg, u)?;
            acc += (a + c).norm_sqr();
        }
        raw.push(acc);
    }
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}
