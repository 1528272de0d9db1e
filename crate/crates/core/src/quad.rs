//! Quadrature used by the kernel, propagator and oracle code.
//!
//! Three tools: Gauss–Legendre panels along straight complex segments,
//! adaptive Gauss–Kronrod (7/15) on real intervals, and an integrator for
//! `∫₀^{T_max} a(T) e^{is/(4T)} dT`, the shape of every intrinsic-length
//! integral in this crate.

use std::collections::BinaryHeap;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{config, Result};

/// Gauss–Legendre nodes and weights on [−1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pairs: Vec<(f64, f64)>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let rule = gauss_quad::GaussLegendre::new(n.max(2)).expect("degree >= 2");
        GaussLegendre { pairs: rule.as_node_weight_pairs().to_vec() }
    }

    /// `∫ f(z) dz` along the straight segment z0 → z1, split into `panels` pieces.
    pub fn segment(&self, z0: C64, z1: C64, panels: usize, mut f: impl FnMut(C64) -> C64) -> C64 {
        let panels = panels.max(1);
        let dz = (z1 - z0) / panels as f64;
        let mut total = C64::new(0.0, 0.0);
        for k in 0..panels {
            let a = z0 + dz * k as f64;
            let half = dz * 0.5;
            let mid = a + half;
            let mut acc = C64::new(0.0, 0.0);
            for &(x, w) in &self.pairs {
                acc += f(mid + half * x) * w;
            }
            total += acc * half;
        }
        total
    }

    /// Real interval version of [`GaussLegendre::segment`].
    pub fn interval(&self, a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> C64) -> C64 {
        self.segment(C64::new(a, 0.0), C64::new(b, 0.0), panels, |z| f(z.re))
    }
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &mut impl FnMut(f64) -> C64, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    let kron = kron * h;
    let gauss = gauss * h;
    (kron, (kron - gauss).norm())
}

struct Piece {
    a: f64,
    b: f64,
    value: C64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: C64,
    pub error: f64,
    pub evaluations: usize,
}

/// Globally adaptive Gauss–Kronrod 7/15 on `[a, b]`.
///
/// `initial` equal pieces seed the refinement, which helps for
/// oscillatory integrands. Stops when the summed error estimate falls below
/// `max(abs_tol, rel_tol·|value|)` or after `max_pieces` pieces.
pub fn adaptive_gk(
    mut f: impl FnMut(f64) -> C64,
    a: f64,
    b: f64,
    initial: usize,
    abs_tol: f64,
    rel_tol: f64,
    max_pieces: usize,
) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite() && b > a) {
        return config(format!("bad integration interval [{a}, {b}]"));
    }
    let initial = initial.max(1);
    let mut heap = BinaryHeap::with_capacity(initial * 2);
    let mut total = C64::new(0.0, 0.0);
    let mut err = 0.0;
    let w = (b - a) / initial as f64;
    for k in 0..initial {
        let lo = a + w * k as f64;
        let hi = if k + 1 == initial { b } else { lo + w };
        let (v, e) = gk15(&mut f, lo, hi);
        total += v;
        err += e;
        heap.push(Piece { a: lo, b: hi, value: v, err: e });
    }
    let mut evaluations = 15 * initial;
    while err > abs_tol.max(rel_tol * total.norm()) && heap.len() < max_pieces {
        let p = heap.pop().expect("heap is never empty");
        let m = 0.5 * (p.a + p.b);
        let (v1, e1) = gk15(&mut f, p.a, m);
        let (v2, e2) = gk15(&mut f, m, p.b);
        evaluations += 30;
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.err;
        heap.push(Piece { a: p.a, b: m, value: v1, err: e1 });
        heap.push(Piece { a: m, b: p.b, value: v2, err: e2 });
    }
    // Re-sum to shed accumulated cancellation from the running updates.
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.err).sum();
    Ok(Estimate { value, error, evaluations })
}

/// Settings for [`inverse_chirp_integral`].
#[derive(Debug, Clone, Copy)]
pub struct ChirpQuad {
    /// Upper limit of the T integral.
    pub t_max: f64,
    /// Largest phase advance allowed across one Simpson panel (radians).
    pub phase_step: f64,
    /// Bound on the angular frequency of the amplitude in T.
    pub rate: f64,
}

/// Phase accumulated by e^{is/(4T)} at the hand-off point between the
/// complex ray and the real Simpson mesh.
const HANDOFF_PHASE: f64 = 200.0;

/// Independent Simpson chunks; summed in a fixed order so results do not
/// depend on the thread count.
const SIMPSON_CHUNKS: usize = 32;

/// `∫₀^{t_max} amp(T) e^{is/(4T)} dT` for `s ≠ 0`.
///
/// `amp` must be analytic for Re T > 0 near the positive axis and grow at
/// most like a power as T → 0. Near T = 0 the substitution u = 1/T turns the
/// chirp into e^{isu/4}, which is integrated along the ray u = U + i·sign(s)·y
/// where it decays exponentially. The rest is composite Simpson on a mesh
/// whose panels advance the total phase by at most `phase_step` and grow
/// at most geometrically.
pub fn inverse_chirp_integral(amp: impl Fn(C64) -> C64 + Sync, s: f64, q: &ChirpQuad) -> Result<C64> {
    if s == 0.0 || !s.is_finite() {
        return config("chirp parameter s must be finite and nonzero");
    }
    if !(q.t_max > 0.0 && q.phase_step > 0.0 && q.rate >= 0.0) {
        return config("t_max and phase_step must be positive, rate non-negative");
    }
    let a = s.abs() / 4.0;
    let mut t_min = a / HANDOFF_PHASE;
    if q.rate > 0.0 {
        t_min = t_min.min(0.5 / q.rate);
    }
    let t_min = t_min.min(q.t_max);

    let gl = GaussLegendre::new(20);
    let sign = s.signum();
    let u0 = 1.0 / t_min;
    let chirp = |t: C64| (C64::i() * s / (4.0 * t)).exp();

    // Ray part: ∫_{U}^{∞} amp(1/u) e^{isu/4} u^{-2} du along u = U + iσy.
    let y_end = 40.0 / a;
    let dir = C64::new(0.0, sign);
    let ray = gl.interval(0.0, y_end, 40, |y| {
        let u = C64::new(u0, 0.0) + dir * y;
        let t = u.inv();
        amp(t) * (C64::i() * s * u / 4.0).exp() * t * t * dir
    });

    // Simpson part on [t_min, t_max], in independent chunks.
    let f = |t: f64| {
        let tc = C64::new(t, 0.0);
        amp(tc) * chirp(tc)
    };
    let chunks = SIMPSON_CHUNKS.min(((q.t_max - t_min) / t_min).ceil().max(1.0) as usize);
    let width = (q.t_max - t_min) / chunks as f64;
    let simpson: C64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = t_min + width * c as f64;
            let hi = if c + 1 == chunks { q.t_max } else { lo + width };
            let mut acc = C64::new(0.0, 0.0);
            let mut t = lo;
            let mut ft = f(t);
            while t < hi {
                let speed = a / (t * t) + q.rate;
                let mut h = (q.phase_step / speed).min(0.05 * t);
                if t + h >= hi {
                    h = hi - t;
                }
                let fm = f(t + 0.5 * h);
                let f1 = f(t + h);
                acc += (ft + fm * 4.0 + f1) * (h / 6.0);
                t += h;
                ft = f1;
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let total = ray + simpson;
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gl_polynomial_exact() {
        let gl = GaussLegendre::new(5);
        let v = gl.interval(0.0, 2.0, 1, |x| C64::new(x.powi(9), 0.0));
        assert!((v.re - 2f64.powi(10) / 10.0).abs() < 1e-10);
    }

    #[test]
    fn gl_complex_segment() {
        // ∫ e^z dz from 0 to iπ = e^{iπ} − 1 = −2.
        let gl = GaussLegendre::new(16);
        let v = gl.segment(C64::new(0.0, 0.0), C64::new(0.0, PI), 2, |z| z.exp());
        assert!((v - C64::new(-2.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn gk_oscillatory() {
        let est = adaptive_gk(|x| C64::new(0.0, x).exp(), 0.0, 100.0, 8, 1e-13, 1e-13, 10_000).unwrap();
        let exact = (C64::new(0.0, 100.0).exp() - 1.0) / C64::i();
        assert!((est.value - exact).norm() < 1e-11, "{}", est.value);
    }

    #[test]
    fn gk_rejects_bad_interval() {
        assert!(adaptive_gk(|_| C64::new(1.0, 0.0), 1.0, 0.0, 1, 1e-9, 1e-9, 10).is_err());
    }

    #[test]
    fn chirp_integral_matches_closed_form() {
        // ∫₀^∞ T^{-1/2} e^{-iμT} e^{is/(4T)} dT = √(π/(iμ)) e^{−√(−iμ·(−is))}
        // i.e. √(π/(iμ))·exp(−√(μs)) for s, μ > 0 (continued from the
        // Laplace-type identity ∫ T^{-1/2} e^{−αT − β/T} = √(π/α) e^{−2√(αβ)}).
        let (s, mu, eps) = (1.7, 1.0, 2e-3);
        let alpha = C64::new(eps, mu);
        let beta = C64::new(0.0, -s / 4.0);
        let exact = (C64::new(PI, 0.0) / alpha).sqrt() * (-(alpha * beta).sqrt() * 2.0).exp();
        let q = ChirpQuad { t_max: 12.0 / eps, phase_step: 0.05, rate: mu };
        let v = inverse_chirp_integral(|t| t.powf(-0.5) * (-alpha * t).exp(), s, &q).unwrap();
        assert!((v - exact).norm() / exact.norm() < 1e-6, "{v} vs {exact}");
    }

    #[test]
    fn chirp_integral_negative_s() {
        let (s, mu, eps) = (-2.3, 1.5, 2e-3);
        let alpha = C64::new(eps, mu);
        let beta = C64::new(0.0, -s / 4.0);
        let exact = (C64::new(PI, 0.0) / alpha).sqrt() * (-(alpha * beta).sqrt() * 2.0).exp();
        let q = ChirpQuad { t_max: 12.0 / eps, phase_step: 0.05, rate: mu };
        let v = inverse_chirp_integral(|t| t.powf(-0.5) * (-alpha * t).exp(), s, &q).unwrap();
        assert!((v - exact).norm() / exact.norm() < 1e-6, "{v} vs {exact}");
    }

    #[test]
    fn chirp_rejects_light_cone() {
        let q = ChirpQuad { t_max: 1.0, phase_step: 0.1, rate: 1.0 };
        assert!(inverse_chirp_integral(|_| C64::new(1.0, 0.0), 0.0, &q).is_err());
    }
}
