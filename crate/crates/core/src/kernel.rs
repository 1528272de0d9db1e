//! The parametrized propagation kernel K(x−x₀; λ−λ₀) and λ-evolution.
//!
//! Normalization: K is exactly
//! `(2π)^{−(D+1)} ∫ d^{D+1}p e^{ip·x} e^{−iλ(p²+m²)}`, i.e. the momentum
//! factor has unit coefficient.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::spacetime::{minkowski_square, spectral_transform, ComplexField, Direction, EventVector, MomentumVector};

/// How the path-integral normalization constant is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtaConvention {
    /// Unit coefficient on the momentum-space factor.
    #[default]
    MomentumNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub mass: f64,
    pub lambda0: f64,
    pub eta: EtaConvention,
}

impl KernelParams {
    pub fn new(mass: f64) -> Result<Self> {
        let p = KernelParams { mass, lambda0: 0.0, eta: EtaConvention::MomentumNormalized };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return config(format!("mass must be positive, got {}", self.mass));
        }
        if !self.lambda0.is_finite() {
            return config("lambda0 must be finite");
        }
        Ok(())
    }

    pub fn mass_sq(&self) -> f64 {
        self.mass * self.mass
    }
}

/// `e^{−i·dlambda·(p²+m²)}`.
pub fn kernel_momentum(p: &MomentumVector, dlambda: f64, params: &KernelParams) -> C64 {
    let w = minkowski_square(p) + params.mass_sq();
    C64::from_polar(1.0, -dlambda * w)
}

/// `(4πλ)^{−(D+1)/2} e^{iπ(1−D)/4}`: everything in the free kernel except
/// the mass phase and the chirp `e^{is/(4λ)}`. Principal powers, so it
/// continues analytically into Re λ > 0.
pub fn kernel_amplitude(spatial_dims: usize, lambda: C64) -> C64 {
    let d = spatial_dims as f64;
    (lambda * (4.0 * PI)).powf(-(d + 1.0) / 2.0) * C64::from_polar(1.0, PI * (1.0 - d) / 4.0)
}

/// Closed-form free kernel for `dlambda > 0`:
/// `e^{−iλm²} (4πλ)^{−(D+1)/2} e^{iπ(1−D)/4} e^{is/(4λ)}` with `s = dx²`.
pub fn kernel_position(dx: &EventVector, dlambda: f64, params: &KernelParams) -> Result<C64> {
    if !(dlambda > 0.0) || !dlambda.is_finite() {
        return domain(format!("kernel_position needs dlambda > 0, got {dlambda}"));
    }
    let d = dx.x.len();
    if !(1..=3).contains(&d) {
        return config(format!("spatial dimension {d} unsupported"));
    }
    let s = minkowski_square(dx);
    let phase = s / (4.0 * dlambda) - dlambda * params.mass_sq();
    Ok(kernel_amplitude(d, C64::new(dlambda, 0.0)) * C64::from_polar(1.0, phase))
}

fn check_spacetime_grid(psi: &ComplexField) -> Result<()> {
    psi.grid.validate()?;
    if !psi.grid.time_axis {
        return config("λ-evolution needs a grid whose axis 0 is time");
    }
    if !(2..=4).contains(&psi.grid.axes()) {
        return config("spacetime grid must have 1 to 3 spatial axes");
    }
    if psi.values.len() != psi.grid.len() {
        return config("field value count does not match grid");
    }
    Ok(())
}

/// Multiplies the spectrum of `psi` by `f(p²+m²)` and transforms back.
fn spectral_multiply(psi: &ComplexField, params: &KernelParams, f: impl Fn(f64) -> C64 + Sync) -> Result<ComplexField> {
    check_spacetime_grid(psi)?;
    let mut ft = spectral_transform(psi, Direction::Forward)?;
    let grid = ft.grid.clone();
    let m2 = params.mass_sq();
    ft.values.par_iter_mut().enumerate().for_each(|(i, v)| {
        let w = minkowski_square(&grid.momentum_vector_of(i)) + m2;
        *v *= f(w);
    });
    spectral_transform(&ft, Direction::Inverse)
}

/// Split-step spectral λ-evolution by `dlambda ≥ 0`.
pub fn evolve(psi: &ComplexField, dlambda: f64, params: &KernelParams) -> Result<ComplexField> {
    if !(dlambda >= 0.0) || !dlambda.is_finite() {
        return domain(format!("evolve needs dlambda >= 0, got {dlambda}"));
    }
    params.validate()?;
    if dlambda == 0.0 {
        check_spacetime_grid(psi)?;
        return Ok(psi.clone());
    }
    spectral_multiply(psi, params, |w| C64::from_polar(1.0, -dlambda * w))
}

/// `(□ − m²)ψ` with the d'Alembertian `−∂_t² + ∇²` applied spectrally.
pub fn wave_operator(psi: &ComplexField, params: &KernelParams) -> Result<ComplexField> {
    spectral_multiply(psi, params, |w| C64::new(-w, 0.0))
}

/// Relative L2 residual of the Stueckelberg–Schrödinger equation
/// `−i∂_λψ = (□ − m²)ψ` at λ = `lambda`, with ∂_λ replaced by a centered
/// difference of step `h` (needs `lambda ≥ h`).
pub fn stueckelberg_residual(psi0: &ComplexField, lambda: f64, h: f64, params: &KernelParams) -> Result<f64> {
    if !(h > 0.0 && lambda >= h) {
        return domain("residual needs 0 < h <= lambda");
    }
    let center = evolve(psi0, lambda, params)?;
    let plus = evolve(psi0, lambda + h, params)?;
    let minus = evolve(psi0, lambda - h, params)?;
    let rhs = wave_operator(&center, params)?;
    let mut num = 0.0;
    for ((p, m), r) in plus.values.iter().zip(&minus.values).zip(&rhs.values) {
        let lhs = -C64::i() * (p - m) / (2.0 * h);
        num += (lhs - r).norm_sqr();
    }
    Ok((num / center.norm_sqr()).sqrt())
}

/// Observed convergence orders `log2(r(h_k)/r(h_{k+1}))` for successive
/// halvings listed in `steps`.
pub fn residual_orders(psi0: &ComplexField, lambda: f64, steps: &[f64], params: &KernelParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let res: Vec<f64> = steps.iter().map(|&h| stueckelberg_residual(psi0, lambda, h, params)).collect::<Result<_>>()?;
    let orders = res
        .windows(2)
        .zip(steps.windows(2))
        .map(|(r, h)| (r[0] / r[1]).ln() / (h[0] / h[1]).ln())
        .collect();
    Ok((res, orders))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spacetime::GridSpec;

    fn params() -> KernelParams {
        KernelParams::new(1.0).unwrap()
    }

    #[test]
    fn momentum_examples() {
        let p = params();
        let on_shell = MomentumVector::new(2f64.sqrt(), vec![1.0]);
        assert!((kernel_momentum(&on_shell, 3.7, &p) - C64::new(1.0, 0.0)).norm() < 1e-14);
        let v = kernel_momentum(&MomentumVector::new(0.0, vec![0.0]), PI, &p);
        assert!((v - C64::new(-1.0, 0.0)).norm() < 1e-15);
        let v = kernel_momentum(&MomentumVector::new(0.0, vec![1.0]), PI / 4.0, &p);
        assert!((v - C64::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn position_domain() {
        let dx = EventVector::new(0.1, vec![0.2]);
        assert!(kernel_position(&dx, 0.0, &params()).is_err());
        assert!(kernel_position(&dx, -1.0, &params()).is_err());
        assert!(KernelParams::new(-1.0).is_err());
    }

    #[test]
    fn position_even() {
        let p = params();
        for (t, x, l) in [(0.3, -0.7, 0.5), (1.2, 0.4, 0.1), (-2.0, 3.0, 1.7)] {
            let dx = EventVector::new(t, vec![x]);
            let a = kernel_position(&dx, l, &p).unwrap();
            let b = kernel_position(&dx.neg(), l, &p).unwrap();
            assert_eq!(a, b);
        }
    }

    fn packet(grid: &GridSpec, sigma: f64, kt: f64, kx: f64) -> ComplexField {
        ComplexField::from_fn(grid.clone(), |c| {
            let r2 = c.iter().map(|v| v * v).sum::<f64>();
            C64::from_polar((-r2 / (2.0 * sigma * sigma)).exp(), -kt * c[0] + kx * c[1])
        })
        .unwrap()
    }

    #[test]
    fn evolve_identity_and_unitarity() {
        let g = GridSpec::spacetime(1, 64, 20.0).unwrap();
        let psi = packet(&g, 2.0, 0.5, 1.0);
        assert_eq!(evolve(&psi, 0.0, &params()).unwrap(), psi);
        let out = evolve(&psi, 0.7, &params()).unwrap();
        assert!((out.l2_norm() / psi.l2_norm() - 1.0).abs() < 1e-12);
        assert!(evolve(&psi, -0.1, &params()).is_err());
    }

    #[test]
    fn evolve_plane_wave_eigenstate() {
        let g = GridSpec::new(vec![16, 32], vec![6.0, 9.0], vec![0.0, 0.0], true).unwrap();
        let p = MomentumVector::new(g.momentum(0, 3), vec![g.momentum(1, 30)]);
        let psi = ComplexField::from_fn(g.clone(), |c| C64::from_polar(1.0, p.dot_event(&EventVector::new(c[0], vec![c[1]])))).unwrap();
        let l = 0.37;
        let out = evolve(&psi, l, &params()).unwrap();
        let factor = kernel_momentum(&p, l, &params());
        for (a, b) in out.values.iter().zip(&psi.values) {
            assert!((a - b * factor).norm() < 1e-12);
        }
    }

    #[test]
    fn evolve_semigroup() {
        let g = GridSpec::spacetime(1, 64, 16.0).unwrap();
        let psi = packet(&g, 1.5, 0.3, -0.8);
        let p = params();
        let whole = evolve(&psi, 0.9, &p).unwrap();
        let split = evolve(&evolve(&psi, 0.4, &p).unwrap(), 0.5, &p).unwrap();
        assert!(split.relative_l2_distance(&whole).unwrap() < 1e-12);
    }

    #[test]
    fn residual_second_order() {
        let g = GridSpec::spacetime(1, 128, 30.0).unwrap();
        let psi = packet(&g, 2.0, 0.5, 1.0);
        let (_, orders) = residual_orders(&psi, 0.1, &[0.04, 0.02, 0.01], &params()).unwrap();
        for o in orders {
            assert!((o - 2.0).abs() < 0.05, "order {o}");
        }
    }

    #[test]
    fn spatial_only_grid_rejected() {
        let g = GridSpec::spatial(1, 16, 4.0).unwrap();
        let psi = ComplexField::zeros(g).unwrap();
        assert!(evolve(&psi, 0.1, &params()).is_err());
    }
}
