//! Closed-form Feynman propagators at ε → 0 built from Bessel functions,
//! each Bessel function evaluated from its integral representation.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{domain, Result};
use crate::quad::adaptive_gk;
use crate::spacetime::{minkowski_square, EventVector};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

fn real_integral(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    Ok(adaptive_gk(|u| C64::new(f(u), 0.0), a, b, 16, 1e-15, 1e-13, 20_000)?.value.re)
}

/// `K_ν(z) = ∫₀^∞ e^{−z cosh u} cosh(νu) du`, z > 0.
pub fn bessel_k(nu: f64, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return domain("bessel_k needs z > 0");
    }
    let top = (750.0 / z).max(1.0).acosh() + 1.0;
    real_integral(|u| (-z * u.cosh()).exp() * (nu * u).cosh(), 0.0, top)
}

/// `J₀(z) = π⁻¹ ∫₀^π cos(z sin θ) dθ`.
pub fn bessel_j0(z: f64) -> Result<f64> {
    Ok(real_integral(|t| (z * t.sin()).cos(), 0.0, PI)? / PI)
}

/// `Y₀(z) = 4π⁻² ∫₀^{π/2} cos(z cos θ)(γ + ln(2z sin²θ)) dθ`, z > 0.
pub fn bessel_y0(z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return domain("bessel_y0 needs z > 0");
    }
    let f = |t: f64| (z * t.cos()).cos() * (EULER_GAMMA + (2.0 * z * t.sin().powi(2)).ln());
    Ok(4.0 / (PI * PI) * real_integral(f, 0.0, PI / 2.0)?)
}

/// ε → 0 Feynman propagator: any separation for one spatial dimension,
/// spacelike separations for three.
pub fn feynman_closed_form(dx: &EventVector, m: f64) -> Result<C64> {
    let s = minkowski_square(dx);
    match (dx.x.len(), s > 0.0) {
        (1, true) => Ok(C64::new(bessel_k(0.0, m * s.sqrt())? / (2.0 * PI), 0.0)),
        (1, false) => {
            let z = m * (-s).sqrt();
            Ok(C64::new(-bessel_y0(z)?, -bessel_j0(z)?) / 4.0)
        }
        (3, true) => {
            let r = s.sqrt();
            Ok(C64::new(m * bessel_k(1.0, m * r)? / (4.0 * PI * PI * r), 0.0))
        }
        _ => domain("no closed form for this dimension and separation"),
    }
}
