//! Feynman propagator from the kernel: intrinsic-length integration, the
//! momentum-space construction, and the mass-superposition identity.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::kernel::kernel_amplitude;
use crate::quad::{inverse_chirp_integral, ChirpQuad, GaussLegendre};
use crate::spacetime::{minkowski_square, EventVector, MomentumVector};

/// Damping and quadrature settings for the T integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    /// iε damping, in mass² units.
    pub epsilon: f64,
    /// Upper cutoff of the intrinsic length.
    pub t_max: f64,
    /// Largest phase advance per Simpson panel.
    pub phase_step: f64,
}

/// Minimum `ε·T_max`: the dropped tail is below e⁻⁵ of the integrand scale.
pub const MIN_DAMPING: f64 = 5.0;

impl EpsilonSchedule {
    /// `T_max = 10/ε`, phase step 0.1.
    pub fn new(epsilon: f64) -> Result<Self> {
        let s = EpsilonSchedule { epsilon, t_max: 10.0 / epsilon, phase_step: 0.1 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return config(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return config(format!("t_max must be positive, got {}", self.t_max));
        }
        if self.epsilon * self.t_max < MIN_DAMPING {
            return config(format!(
                "non-convergent schedule: epsilon*t_max = {} < {MIN_DAMPING}",
                self.epsilon * self.t_max
            ));
        }
        if !(self.phase_step > 0.0 && self.phase_step <= 1.0) {
            return config(format!("phase_step must lie in (0, 1], got {}", self.phase_step));
        }
        Ok(())
    }
}

/// Which construction of Δ(x) to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    /// ∫dT e^{−εT} K(x; T).
    #[default]
    Lambda,
    /// Fourier integral of −i/(p²+m²−iε).
    Momentum,
}

/// `−i/(p² + m² − iε)`.
pub fn propagator_momentum(p: &MomentumVector, m: f64, epsilon: f64) -> Result<C64> {
    let w = minkowski_square(p) + m * m;
    let scale = p.e * p.e + p.p.iter().map(|v| v * v).sum::<f64>() + m * m;
    let den = C64::new(w, -epsilon);
    if epsilon == 0.0 && w.abs() <= 1e-12 * scale {
        return domain("propagator pole hit with epsilon = 0");
    }
    Ok(-C64::i() / den)
}

/// λ-route propagator with mass² `mu` (any sign): `∫₀^{T_max} e^{−iTμ−εT} K₀(dx; T) dT`
/// where K₀ is the massless kernel.
pub fn propagator_position_mass_sq(dx: &EventVector, mu: f64, sched: &EpsilonSchedule) -> Result<C64> {
    sched.validate()?;
    let d = dx.x.len();
    if !(1..=3).contains(&d) {
        return config(format!("spatial dimension {d} unsupported"));
    }
    let s = minkowski_square(dx);
    if s == 0.0 {
        return domain("propagator_position is undefined on the light cone");
    }
    let rate = C64::new(sched.epsilon, mu);
    let q = ChirpQuad { t_max: sched.t_max, phase_step: sched.phase_step, rate: mu.abs() };
    inverse_chirp_integral(|t| kernel_amplitude(d, t) * (-rate * t).exp(), s, &q)
}

/// Feynman propagator by intrinsic-length integration of the kernel.
pub fn propagator_position(dx: &EventVector, m: f64, sched: &EpsilonSchedule) -> Result<C64> {
    if !(m.is_finite() && m > 0.0) {
        return config(format!("mass must be positive, got {m}"));
    }
    propagator_position_mass_sq(dx, m * m, sched)
}

/// Feynman propagator from its momentum representation.
///
/// The energy integral is done exactly by residues, leaving
/// `∫d^Dp/(2π)^D e^{i𝐩·𝐱} e^{−iE|t|}/(2E)` with `E = √(𝐩²+m²−iε)`. That
/// integral runs along the real axis up to a cutoff and then along a ray
/// into the half plane where the remaining oscillation decays. Supports
/// D = 1 and D = 3.
pub fn propagator_position_momentum(dx: &EventVector, m: f64, epsilon: f64) -> Result<C64> {
    if !(m.is_finite() && m > 0.0) {
        return config(format!("mass must be positive, got {m}"));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return config(format!("epsilon must be positive, got {epsilon}"));
    }
    if minkowski_square(dx) == 0.0 {
        return domain("propagator_position is undefined on the light cone");
    }
    let mu = C64::new(m * m, -epsilon);
    let t = dx.t.abs();
    let r = dx.x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let energy = |p: C64| (p * p + mu).sqrt();
    // e^{iσpr − iE|t|} / (2E), evaluated with one exponent.
    let wave = |p: C64, sigma: f64| {
        let e = energy(p);
        (C64::i() * (p * (sigma * r) - e * t)).exp() / (e * 2.0)
    };
    let gl = GaussLegendre::new(20);
    let cutoff = 10.0 * (m + 1.0);
    let seg_panels = (cutoff * (r + t + 1.0) / 1.5).ceil() as usize + 4;
    let ray = |sigma: f64, power: i32| -> C64 {
        let omega = sigma * r - t;
        let dir = C64::new(0.0, omega.signum());
        let y_end = 40.0 / omega.abs();
        gl.interval(0.0, y_end, 40, |y| {
            let p = C64::new(cutoff, 0.0) + dir * y;
            wave(p, sigma) * p.powi(power) * dir
        })
    };
    match dx.x.len() {
        1 => {
            let real = gl.interval(0.0, cutoff, seg_panels, |p| {
                let pc = C64::new(p, 0.0);
                let e = energy(pc);
                (-C64::i() * e * t).exp() / (e * 2.0) * (2.0 * (p * r).cos())
            });
            Ok((real + ray(1.0, 0) + ray(-1.0, 0)) / (2.0 * PI))
        }
        3 if r == 0.0 => {
            let real = gl.interval(0.0, cutoff, seg_panels, |p| wave(C64::new(p, 0.0), 0.0) * (p * p));
            Ok((real + ray(0.0, 2)) / (2.0 * PI * PI))
        }
        3 => {
            let real = gl.interval(0.0, cutoff, seg_panels, |p| {
                let pc = C64::new(p, 0.0);
                let e = energy(pc);
                (-C64::i() * e * t).exp() / (e * 2.0) * (p * (p * r).sin())
            });
            let rays = (ray(1.0, 1) - ray(-1.0, 1)) / (2.0 * C64::i());
            Ok((real + rays) / (2.0 * PI * PI * r))
        }
        d => config(format!("momentum route supports D = 1 or 3, not {d}")),
    }
}

/// Δ(dx) by the chosen route.
pub fn propagator(dx: &EventVector, m: f64, sched: &EpsilonSchedule, route: Route) -> Result<C64> {
    match route {
        Route::Lambda => propagator_position(dx, m, sched),
        Route::Momentum => {
            sched.validate()?;
            propagator_position_momentum(dx, m, sched.epsilon)
        }
    }
}

/// Least-squares line through `(ε_i, v_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    /// Value extrapolated to ε = 0.
    pub intercept: C64,
    pub slope: C64,
    /// Largest |v_i − fit(ε_i)| divided by |intercept|.
    pub relative_residual: f64,
}

pub fn fit_linear(eps: &[f64], values: &[C64]) -> Result<LinearFit> {
    if eps.len() != values.len() || eps.len() < 2 {
        return config("linear fit needs at least two matching samples");
    }
    let n = eps.len() as f64;
    let mx = eps.iter().sum::<f64>() / n;
    let my: C64 = values.iter().sum::<C64>() / n;
    let sxx: f64 = eps.iter().map(|e| (e - mx) * (e - mx)).sum();
    if sxx == 0.0 {
        return config("linear fit needs distinct abscissae");
    }
    let sxy: C64 = eps.iter().zip(values).map(|(e, v)| (v - my) * (e - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let worst = eps
        .iter()
        .zip(values)
        .map(|(e, v)| (v - (intercept + slope * *e)).norm())
        .fold(0.0, f64::max);
    Ok(LinearFit { intercept, slope, relative_residual: worst / intercept.norm() })
}

/// Evaluates Δ(dx) at each ε and fits a line in ε.
pub fn epsilon_extrapolate(dx: &EventVector, m: f64, eps: &[f64], route: Route) -> Result<(Vec<C64>, LinearFit)> {
    let values: Vec<C64> = eps
        .iter()
        .map(|&e| propagator(dx, m, &EpsilonSchedule::new(e)?, route))
        .collect::<Result<_>>()?;
    let fit = fit_linear(eps, &values)?;
    Ok((values, fit))
}

/// Uniform cell-centered grid of mass² values with a Tukey taper: flat in
/// the middle, raised-cosine roll-off over a fraction `taper` of the cells
/// (split between both ends). `taper = 1` is the Hann window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassGrid {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
    pub taper: f64,
}

impl MassGrid {
    pub fn new(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        let g = MassGrid { lo, hi, cells, taper: DEFAULT_TAPER };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.hi > self.lo) {
            return config("mass grid needs lo < hi");
        }
        if self.cells < 4 || !self.cells.is_multiple_of(2) {
            return config("mass grid needs an even number of cells, at least 4");
        }
        if !(self.taper > 0.0 && self.taper <= 1.0) {
            return config("mass grid taper fraction must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        self.lo + (j as f64 + 0.5) * self.spacing()
    }

    /// Cells in each cosine edge.
    fn edge(&self) -> usize {
        ((self.taper * self.cells as f64 / 2.0).round() as usize).clamp(1, self.cells / 2)
    }

    pub fn taper_weight(&self, j: usize) -> f64 {
        let e = self.edge();
        let k = j.min(self.cells - 1 - j);
        if k >= e {
            1.0
        } else {
            (PI * (k as f64 + 0.5) / (2.0 * e as f64)).sin().powi(2)
        }
    }

    /// Half the spacing over twice the range, about the same center.
    /// Halving the spacing alone converges to a range-limited smear, not to
    /// the kernel.
    pub fn refined(&self) -> Self {
        let c = 0.5 * (self.lo + self.hi);
        let h = self.hi - self.lo;
        MassGrid { lo: c - h, hi: c + h, cells: self.cells * 4, ..*self }
    }

    /// `(Δμ/2π) Σ_j w_j e^{iτμ_j}` summed in closed form; τ may be complex.
    pub fn window(&self, tau: C64) -> C64 {
        let n = self.cells;
        let e = self.edge();
        let dm = self.spacing();
        let phi = tau * dm;
        let base = (C64::i() * tau * (self.lo + 0.5 * dm)).exp();
        let th = PI / e as f64;
        // Raised-cosine edge: w = ½ − ¼e^{iθ(k+½)} − ¼e^{−iθ(k+½)}, k the
        // distance from the nearer end.
        let left = run(0, e, phi) * 0.5
            - C64::from_polar(0.25, th / 2.0) * run(0, e, phi + th)
            - C64::from_polar(0.25, -th / 2.0) * run(0, e, phi - th);
        let shift = th * (n as f64 - 0.5);
        let right = run(n - e, e, phi) * 0.5
            - C64::from_polar(0.25, shift) * run(n - e, e, phi - th)
            - C64::from_polar(0.25, -shift) * run(n - e, e, phi + th);
        let middle = if n > 2 * e { run(e, n - 2 * e, phi) } else { C64::new(0.0, 0.0) };
        base * (left + middle + right) * (dm / (2.0 * PI))
    }
}

/// Fraction of cells in the tapered edges.
pub const DEFAULT_TAPER: f64 = 0.5;

/// `Σ_{j=start}^{start+len−1} e^{ijφ}`.
fn run(start: usize, len: usize, phi: C64) -> C64 {
    (C64::i() * phi * start as f64).exp() * dirichlet(len, phi)
}

/// `Σ_{j<n} e^{ijφ} = e^{i(n−1)φ/2} sin(nφ/2)/sin(φ/2)` for complex φ.
fn dirichlet(n: usize, phi: C64) -> C64 {
    let nf = n as f64;
    let k = (phi.re / (2.0 * PI)).round();
    let delta = phi - 2.0 * PI * k;
    let sign = if (k as i64 * (n as i64 - 1)).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let ratio = if delta.norm() < 1e-6 {
        C64::new(nf, 0.0) * (C64::new(1.0, 0.0) - delta * delta * ((nf * nf - 1.0) / 24.0))
    } else {
        (delta * (nf / 2.0)).sin() / (delta / 2.0).sin()
    };
    (C64::i() * phi * ((nf - 1.0) / 2.0)).exp() * ratio * sign
}

/// Outcome of one mass-superposition comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassCheck {
    /// θ(T) K(dx; T).
    pub lhs: C64,
    /// `(2π)^{-1} e^{−iTm²} Σ Δμ w_j e^{iTμ_j} Δ(dx; μ_j)`.
    pub rhs: C64,
    /// |rhs − lhs| / |lhs|.
    pub discrepancy: f64,
    /// The e^{iTμ} phase advances by at least π per cell.
    pub under_resolved: bool,
}

/// Compares the kernel at intrinsic length T with the tapered superposition of
/// propagators over the mass grid.
///
/// The sum over mass cells is moved inside the T′ integral that defines each
/// Δ, where it collapses to the closed-form window of [`MassGrid::window`];
/// the result equals the cell-by-cell sum up to quadrature error.
pub fn mass_superposition_check(dx: &EventVector, t: f64, m: f64, grid: &MassGrid, sched: &EpsilonSchedule) -> Result<MassCheck> {
    grid.validate()?;
    sched.validate()?;
    if !(t > 0.0 && t.is_finite()) {
        return domain(format!("mass superposition needs T > 0, got {t}"));
    }
    let params = crate::kernel::KernelParams::new(m)?;
    let lhs = crate::kernel::kernel_position(dx, t, &params)?;
    let d = dx.x.len();
    let s = minkowski_square(dx);
    if s == 0.0 {
        return domain("mass superposition is undefined on the light cone");
    }
    let rate = grid.lo.abs().max(grid.hi.abs());
    let q = ChirpQuad { t_max: sched.t_max, phase_step: sched.phase_step, rate };
    let eps = sched.epsilon;
    let integral = inverse_chirp_integral(|tp| kernel_amplitude(d, tp) * (-tp * eps).exp() * grid.window(C64::new(t, 0.0) - tp), s, &q)?;
    let rhs = integral * C64::from_polar(1.0, -t * m * m);
    Ok(MassCheck {
        lhs,
        rhs,
        discrepancy: (rhs - lhs).norm() / lhs.norm(),
        under_resolved: t * grid.spacing() >= PI,
    })
}

/// Direct cell-by-cell form of the superposition, one λ-route propagator per
/// mass cell. Only practical for small grids.
pub fn mass_superposition_direct(dx: &EventVector, t: f64, m: f64, grid: &MassGrid, sched: &EpsilonSchedule) -> Result<C64> {
    grid.validate()?;
    let dm = grid.spacing();
    let terms: Vec<C64> = (0..grid.cells)
        .into_par_iter()
        .map(|j| {
            let mu = grid.node(j);
            let delta = propagator_position_mass_sq(dx, mu, sched)?;
            Ok(delta * C64::from_polar(grid.taper_weight(j) * dm / (2.0 * PI), t * mu))
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum::<C64>() * C64::from_polar(1.0, -t * m * m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn momentum_examples() {
        // p² + m² = 1 with tiny ε.
        let v = propagator_momentum(&MomentumVector::new(0.0, vec![0.0]), 1.0, 1e-12).unwrap();
        assert!((v - C64::new(0.0, -1.0)).norm() < 1e-11);
        // On shell, ε = 1e−3 → −i/(−i·1e−3) = 1000.
        let on = MomentumVector::new(2f64.sqrt(), vec![1.0]);
        let v = propagator_momentum(&on, 1.0, 1e-3).unwrap();
        assert!((v - C64::new(1000.0, 0.0)).norm() < 1e-9);
        assert!(propagator_momentum(&on, 1.0, 0.0).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(EpsilonSchedule::new(1e-3).is_ok());
        let bad = EpsilonSchedule { epsilon: 1e-3, t_max: 4000.0, phase_step: 0.1 };
        assert!(bad.validate().is_err());
        assert!(EpsilonSchedule::new(0.0).is_err());
    }

    #[test]
    fn dirichlet_matches_sum() {
        for &phi in &[C64::new(0.3, 0.0), C64::new(2.0 * PI, 0.0), C64::new(2.0 * PI + 1e-9, 1e-8), C64::new(-4.0, 0.02)] {
            let n = 7;
            let direct: C64 = (0..n).map(|j| (C64::i() * phi * j as f64).exp()).sum();
            assert!((dirichlet(n, phi) - direct).norm() < 1e-9, "{phi}");
        }
    }

    #[test]
    fn window_matches_sum() {
        for taper in [0.2, 0.5, 1.0] {
            let g = MassGrid { lo: -3.0, hi: 5.0, cells: 18, taper };
            for &tau in &[C64::new(0.0, 0.0), C64::new(0.7, 0.0), C64::new(-2.2, 0.01), C64::new(2.0 * PI / g.spacing(), 0.0)] {
                let direct: C64 = (0..g.cells)
                    .map(|j| (C64::i() * tau * g.node(j)).exp() * g.taper_weight(j) * g.spacing() / (2.0 * PI))
                    .sum();
                assert!((g.window(tau) - direct).norm() < 1e-12, "{taper} {tau}");
            }
        }
    }

    #[test]
    fn full_taper_is_hann() {
        let g = MassGrid { lo: 0.0, hi: 1.0, cells: 16, taper: 1.0 };
        for j in 0..16 {
            let hann = (PI * (j as f64 + 0.5) / 16.0).sin().powi(2);
            assert!((g.taper_weight(j) - hann).abs() < 1e-15);
        }
    }

    #[test]
    fn fit_recovers_line() {
        let eps = [4e-3, 2e-3, 1e-3];
        let vals: Vec<C64> = eps.iter().map(|e| C64::new(0.5 + 3.0 * e, -0.1 - e)).collect();
        let f = fit_linear(&eps, &vals).unwrap();
        assert!((f.intercept - C64::new(0.5, -0.1)).norm() < 1e-14);
        assert!(f.relative_residual < 1e-12);
    }

    #[test]
    fn light_cone_rejected() {
        let dx = EventVector::new(1.0, vec![1.0]);
        let s = EpsilonSchedule::new(0.1).unwrap();
        assert!(propagator_position(&dx, 1.0, &s).is_err());
        assert!(propagator_position_momentum(&dx, 1.0, 0.1).is_err());
    }
}
