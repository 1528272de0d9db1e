//! Kernel by regulated momentum quadrature, and λ-evolution by brute-force
//! real-space convolution.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{config, Result};
use crate::kernel::{kernel_position, KernelParams};
use crate::quad::adaptive_gk;
use crate::spacetime::{ComplexField, EventVector};

/// Number of ε levels fed to the extrapolation.
const LEVELS: usize = 6;

/// `∫dp/(2π) e^{ipy} e^{−iσλp²} e^{−εp²}` by adaptive quadrature, using
/// evenness in p. `sigma = +1` for spatial axes, `−1` for time.
fn regulated_axis(y: f64, lambda: f64, sigma: f64, eps: f64) -> Result<C64> {
    let p_max = (37.0 / eps).sqrt();
    let total_phase = lambda * p_max * p_max + y.abs() * p_max;
    let pieces = (total_phase / PI).ceil().max(8.0) as usize;
    let est = adaptive_gk(
        |p| C64::from_polar((-eps * p * p).exp() * (p * y).cos(), -sigma * lambda * p * p),
        0.0,
        p_max,
        pieces,
        1e-15,
        1e-12,
        pieces * 64,
    )?;
    Ok(est.value / PI)
}

/// Neville extrapolation of samples `(h_k, v_k)` to h = 0.
pub fn extrapolate_to_zero(h: &[f64], v: &[C64]) -> C64 {
    let mut p = v.to_vec();
    let n = p.len();
    for k in 1..n {
        for i in 0..n - k {
            p[i] = (p[i + 1] * h[i] - p[i] * h[i + k]) / (h[i] - h[i + k]);
        }
    }
    p[0]
}

fn extrapolated_axis(y: f64, lambda: f64, sigma: f64) -> Result<C64> {
    let eps0 = 0.02 * lambda / (1.0 + y * y / (4.0 * lambda));
    let hs: Vec<f64> = (0..LEVELS).map(|k| eps0 / 2f64.powi(k as i32)).collect();
    let vs: Vec<C64> = hs.iter().map(|&e| regulated_axis(y, lambda, sigma, e)).collect::<Result<_>>()?;
    Ok(extrapolate_to_zero(&hs, &vs))
}

/// Kernel value from the momentum integral with a Gaussian regulator
/// `e^{−ε(p₀² + 𝐩²)}`, swept in ε and extrapolated to ε → 0. The integrand
/// factorizes per axis, so each axis is an independent 1D integral.
pub fn kernel_by_quadrature(dx: &EventVector, dlambda: f64, params: &KernelParams) -> Result<C64> {
    if !(dlambda > 0.0) {
        return config("oracle needs dlambda > 0");
    }
    let mut v = extrapolated_axis(dx.t, dlambda, -1.0)?;
    for &x in &dx.x {
        v *= extrapolated_axis(x, dlambda, 1.0)?;
    }
    Ok(v * C64::from_polar(1.0, -dlambda * params.mass_sq()))
}

/// `Σ_{x₀} K(x − x₀; λ) ψ₀(x₀) ΔV` over the grid without periodic wrap.
pub fn convolve_kernel(psi0: &ComplexField, dlambda: f64, params: &KernelParams) -> Result<ComplexField> {
    let grid = &psi0.grid;
    if !grid.time_axis {
        return config("convolution oracle needs a spacetime grid");
    }
    let axes = grid.axes();
    // Kernel on every index difference, offsets shifted by N−1.
    let span: Vec<usize> = grid.points.iter().map(|n| 2 * n - 1).collect();
    let table_len: usize = span.iter().product();
    let spacing: Vec<f64> = (0..axes).map(|a| grid.spacing(a)).collect();
    let table: Vec<C64> = (0..table_len)
        .into_par_iter()
        .map(|flat| {
            let mut rem = flat;
            let mut d = vec![0.0; axes];
            for a in (0..axes).rev() {
                let off = (rem % span[a]) as f64 - (grid.points[a] - 1) as f64;
                rem /= span[a];
                d[a] = off * spacing[a];
            }
            kernel_position(&EventVector::new(d[0], d[1..].to_vec()), dlambda, params)
        })
        .collect::<Result<_>>()?;
    let cell = grid.cell_volume();
    // Position of each grid point along the axis, in plain (unwrapped) order.
    let order = |a: usize, i: usize| -> i64 { crate::spacetime::signed_index(i, grid.points[a]) };
    let values: Vec<C64> = (0..grid.len())
        .into_par_iter()
        .map(|out| {
            let oi = grid.unravel(out);
            let mut acc = C64::new(0.0, 0.0);
            for (src, v) in psi0.values.iter().enumerate() {
                if *v == C64::new(0.0, 0.0) {
                    continue;
                }
                let si = grid.unravel(src);
                let mut flat = 0usize;
                for a in 0..axes {
                    let diff = order(a, oi[a]) - order(a, si[a]) + (grid.points[a] as i64 - 1);
                    flat = flat * span[a] + diff as usize;
                }
                acc += table[flat] * v;
            }
            acc * cell
        })
        .collect();
    ComplexField::new(grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neville_recovers_polynomial() {
        let hs = [0.4, 0.2, 0.1, 0.05];
        let vs: Vec<C64> = hs.iter().map(|&h| C64::new(3.0 + 2.0 * h - h * h * h, h)).collect();
        let v = extrapolate_to_zero(&hs, &vs);
        assert!((v - C64::new(3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn regulated_axis_matches_gaussian() {
        // Regulated 1D integral has the closed form (4π(ε+iλ))^{-1/2} e^{−y²/(4(ε+iλ))}.
        let (y, l, e) = (0.7, 0.5, 0.01);
        let a = C64::new(e, l);
        let exact = (a * 4.0 * PI).powf(-0.5) * (-(y * y) / (a * 4.0)).exp();
        let v = regulated_axis(y, l, 1.0, e).unwrap();
        assert!((v - exact).norm() / exact.norm() < 1e-10, "{v} vs {exact}");
    }
}
