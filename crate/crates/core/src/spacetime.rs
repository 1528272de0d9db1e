//! Minkowski vectors, rectangular periodic grids and the spectral transform.
//!
//! Signature is (−,+,…,+) and the phase convention is
//! `p·x = −p⁰t + 𝐩·𝐱`. On a spacetime grid axis 0 is time.

use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};

/// One time axis with weight −1 and `spatial_dims` axes with weight +1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSignature {
    spatial_dims: usize,
}

impl Default for MetricSignature {
    fn default() -> Self {
        MetricSignature { spatial_dims: 1 }
    }
}

impl MetricSignature {
    pub fn new(spatial_dims: usize) -> Result<Self> {
        if !(1..=3).contains(&spatial_dims) {
            return config(format!("spatial_dims must be 1..=3, got {spatial_dims}"));
        }
        Ok(MetricSignature { spatial_dims })
    }

    pub fn spatial_dims(&self) -> usize {
        self.spatial_dims
    }

    /// Diagonal metric weights, time first.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![1.0; self.spatial_dims + 1];
        w[0] = -1.0;
        w
    }
}

/// Anything with a time-like component and spatial components.
pub trait FourVector {
    fn time_part(&self) -> f64;
    fn space_part(&self) -> &[f64];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventVector {
    pub t: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumVector {
    pub e: f64,
    pub p: Vec<f64>,
}

impl EventVector {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        EventVector { t, x }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().all(|v| v.is_finite())
    }

    pub fn neg(&self) -> Self {
        EventVector { t: -self.t, x: self.x.iter().map(|v| -v).collect() }
    }

    pub fn sub(&self, other: &EventVector) -> Self {
        EventVector {
            t: self.t - other.t,
            x: self.x.iter().zip(&other.x).map(|(a, b)| a - b).collect(),
        }
    }
}

impl MomentumVector {
    pub fn new(e: f64, p: Vec<f64>) -> Self {
        MomentumVector { e, p }
    }

    pub fn is_finite(&self) -> bool {
        self.e.is_finite() && self.p.iter().all(|v| v.is_finite())
    }

    pub fn neg(&self) -> Self {
        MomentumVector { e: -self.e, p: self.p.iter().map(|v| -v).collect() }
    }

    /// `p·x = −p⁰t + 𝐩·𝐱`.
    pub fn dot_event(&self, x: &EventVector) -> f64 {
        -self.e * x.t + self.p.iter().zip(&x.x).map(|(a, b)| a * b).sum::<f64>()
    }
}

impl FourVector for EventVector {
    fn time_part(&self) -> f64 {
        self.t
    }
    fn space_part(&self) -> &[f64] {
        &self.x
    }
}

impl FourVector for MomentumVector {
    fn time_part(&self) -> f64 {
        self.e
    }
    fn space_part(&self) -> &[f64] {
        &self.p
    }
}

/// `−(time component)² + Σ(spatial components)²`.
pub fn minkowski_square<V: FourVector + ?Sized>(v: &V) -> f64 {
    let t = v.time_part();
    let s: f64 = v.space_part().iter().map(|x| x * x).sum();
    s - t * t
}

/// Index in `0..n` mapped to the symmetric range `-n/2..n/2`.
#[inline]
pub fn signed_index(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Rectangular periodic lattice.
///
/// Coordinates on axis `a` are `origin[a] + signed_index(i)·spacing(a)`, so the
/// origin sits at index 0. When `time_axis` is set, axis 0 is time and carries
/// the opposite Fourier sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: Vec<usize>,
    pub extent: Vec<f64>,
    pub origin: Vec<f64>,
    pub time_axis: bool,
}

impl GridSpec {
    pub fn new(points: Vec<usize>, extent: Vec<f64>, origin: Vec<f64>, time_axis: bool) -> Result<Self> {
        let g = GridSpec { points, extent, origin, time_axis };
        g.validate()?;
        Ok(g)
    }

    /// Spacetime grid with the same point count and extent on every axis.
    pub fn spacetime(spatial_dims: usize, n: usize, extent: f64) -> Result<Self> {
        MetricSignature::new(spatial_dims)?;
        let axes = spatial_dims + 1;
        GridSpec::new(vec![n; axes], vec![extent; axes], vec![0.0; axes], true)
    }

    /// Purely spatial (or momentum) lattice, no time axis.
    pub fn spatial(dims: usize, n: usize, extent: f64) -> Result<Self> {
        MetricSignature::new(dims)?;
        GridSpec::new(vec![n; dims], vec![extent; dims], vec![0.0; dims], false)
    }

    pub fn validate(&self) -> Result<()> {
        let axes = self.points.len();
        if axes == 0 {
            return config("grid needs at least one axis");
        }
        if self.extent.len() != axes || self.origin.len() != axes {
            return config(format!(
                "grid axis mismatch: {} point counts, {} extents, {} origins",
                axes,
                self.extent.len(),
                self.origin.len()
            ));
        }
        for (a, (&n, &l)) in self.points.iter().zip(&self.extent).enumerate() {
            if n < 8 || !n.is_power_of_two() {
                return config(format!("axis {a}: point count {n} must be a power of two >= 8"));
            }
            if !(l.is_finite() && l > 0.0) {
                return config(format!("axis {a}: extent {l} must be positive"));
            }
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return config("grid origin must be finite");
        }
        Ok(())
    }

    pub fn axes(&self) -> usize {
        self.points.len()
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.points[axis] as f64
    }

    pub fn momentum_spacing(&self, axis: usize) -> f64 {
        2.0 * std::f64::consts::PI / self.extent[axis]
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + signed_index(i, self.points[axis]) as f64 * self.spacing(axis)
    }

    pub fn momentum(&self, axis: usize, k: usize) -> f64 {
        signed_index(k, self.points[axis]) as f64 * self.momentum_spacing(axis)
    }

    /// Product of spacings: the quadrature weight of one cell.
    pub fn cell_volume(&self) -> f64 {
        (0..self.axes()).map(|a| self.spacing(a)).product()
    }

    pub fn momentum_cell_volume(&self) -> f64 {
        (0..self.axes()).map(|a| self.momentum_spacing(a)).product()
    }

    /// Row-major multi-index of a flat offset (axis 0 slowest).
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes()];
        for a in (0..self.axes()).rev() {
            idx[a] = flat % self.points[a];
            flat /= self.points[a];
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.points).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn coords_of(&self, flat: usize) -> Vec<f64> {
        self.unravel(flat).iter().enumerate().map(|(a, &i)| self.coord(a, i)).collect()
    }

    pub fn momenta_of(&self, flat: usize) -> Vec<f64> {
        self.unravel(flat).iter().enumerate().map(|(a, &k)| self.momentum(a, k)).collect()
    }

    /// Grid point as an event; requires a time axis.
    pub fn event_of(&self, flat: usize) -> EventVector {
        let c = self.coords_of(flat);
        if self.time_axis {
            EventVector::new(c[0], c[1..].to_vec())
        } else {
            EventVector::new(0.0, c)
        }
    }

    /// Conjugate grid momentum as a four-momentum.
    pub fn momentum_vector_of(&self, flat: usize) -> MomentumVector {
        let k = self.momenta_of(flat);
        if self.time_axis {
            MomentumVector::new(k[0], k[1..].to_vec())
        } else {
            MomentumVector::new(0.0, k)
        }
    }
}

/// Complex samples over a grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexField {
    pub grid: GridSpec,
    pub values: Vec<C64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Position to momentum: kernel `e^{−ip·x}`.
    Forward,
    /// Momentum to position: kernel `e^{+ip·x}`.
    Inverse,
}

impl ComplexField {
    pub fn new(grid: GridSpec, values: Vec<C64>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return config(format!("field has {} values, grid has {} points", values.len(), grid.len()));
        }
        Ok(ComplexField { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Result<Self> {
        let n = grid.len();
        ComplexField::new(grid, vec![C64::new(0.0, 0.0); n])
    }

    /// Samples `f(coordinates)` at every grid point.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> C64 + Sync) -> Result<Self> {
        use rayon::prelude::*;
        grid.validate()?;
        let values = (0..grid.len()).into_par_iter().map(|i| f(&grid.coords_of(i))).collect();
        ComplexField::new(grid, values)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Plain Euclidean norm of the sample vector.
    pub fn l2_norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn same_grid(&self, other: &ComplexField) -> Result<()> {
        if self.grid != other.grid {
            return config("fields live on different grids");
        }
        Ok(())
    }

    /// ‖self − other‖ / ‖other‖.
    pub fn relative_l2_distance(&self, other: &ComplexField) -> Result<f64> {
        self.same_grid(other)?;
        let num: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm_sqr()).sum();
        Ok((num / other.norm_sqr()).sqrt())
    }

    /// Column CSV: one index column per axis, then `re,im`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.grid.axes()).map(|a| format!("i{a}")).collect();
        writeln!(w, "{},re,im", header.join(","))?;
        for (flat, v) in self.values.iter().enumerate() {
            let idx = self.grid.unravel(flat);
            let idx: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            writeln!(w, "{},{:e},{:e}", idx.join(","), v.re, v.im)?;
        }
        Ok(())
    }

    /// Reads values written by [`ComplexField::write_csv`] onto `grid`.
    pub fn read_csv<R: BufRead>(grid: GridSpec, r: R) -> Result<Self> {
        let mut field = ComplexField::zeros(grid)?;
        let axes = field.grid.axes();
        let mut seen = vec![false; field.values.len()];
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != axes + 2 {
                return config(format!("csv line {}: expected {} columns", lineno + 1, axes + 2));
            }
            let bad = |_| Error::Config(format!("csv line {}: unparsable value", lineno + 1));
            let mut idx = Vec::with_capacity(axes);
            for (a, c) in cols[..axes].iter().enumerate() {
                let i: usize = c.trim().parse().map_err(|_| Error::Config(format!("csv line {}: bad index", lineno + 1)))?;
                if i >= field.grid.points[a] {
                    return config(format!("csv line {}: index out of range", lineno + 1));
                }
                idx.push(i);
            }
            let re: f64 = cols[axes].trim().parse().map_err(bad)?;
            let im: f64 = cols[axes + 1].trim().parse().map_err(bad)?;
            let flat = field.grid.ravel(&idx);
            field.values[flat] = C64::new(re, im);
            seen[flat] = true;
        }
        if seen.iter().any(|s| !s) {
            return config("csv does not cover every grid point");
        }
        Ok(field)
    }

    /// JSON description of the grid plus caller-supplied provenance.
    pub fn manifest_json(&self, provenance: &serde_json::Value) -> serde_json::Value {
        serde_json::json!({
            "grid": self.grid,
            "points": self.grid.len(),
            "l2_norm": self.l2_norm(),
            "provenance": provenance,
        })
    }
}

/// Unitary DFT with the Minkowski sign convention.
///
/// Forward computes `N^{-1/2} Σ_x e^{−ip·x} f(x)` with `x` the grid
/// coordinates including the origin offset; the inverse undoes it exactly.
pub fn spectral_transform(f: &ComplexField, direction: Direction) -> Result<ComplexField> {
    f.grid.validate()?;
    if f.values.len() != f.grid.len() {
        return config("field value count does not match grid");
    }
    let grid = &f.grid;
    let mut data = f.values.clone();
    let mut planner = FftPlanner::<f64>::new();

    // Origin phase e^{±ip·origin} applied in momentum space.
    let origin_phase = |flat: usize| -> C64 {
        let k = grid.momenta_of(flat);
        let mut phase = 0.0;
        for (a, (kv, o)) in k.iter().zip(&grid.origin).enumerate() {
            let s = if grid.time_axis && a == 0 { -1.0 } else { 1.0 };
            phase += s * kv * o;
        }
        C64::from_polar(1.0, phase)
    };

    if direction == Direction::Inverse && grid.origin.iter().any(|&o| o != 0.0) {
        for (flat, v) in data.iter_mut().enumerate() {
            *v *= origin_phase(flat);
        }
    }

    for axis in 0..grid.axes() {
        // Spatial axes: e^{−ikx} forward. Time axis: e^{+iωt} forward.
        let spatial_forward = direction == Direction::Forward;
        let is_time = grid.time_axis && axis == 0;
        let use_forward_fft = spatial_forward != is_time;
        let n = grid.points[axis];
        let fft: Arc<dyn Fft<f64>> = if use_forward_fft { planner.plan_fft_forward(n) } else { planner.plan_fft_inverse(n) };
        transform_axis(&mut data, &grid.points, axis, fft.as_ref());
        let scale = 1.0 / (n as f64).sqrt();
        data.iter_mut().for_each(|v| *v *= scale);
    }

    if direction == Direction::Forward && grid.origin.iter().any(|&o| o != 0.0) {
        for (flat, v) in data.iter_mut().enumerate() {
            *v *= origin_phase(flat).conj();
        }
    }
    ComplexField::new(grid.clone(), data)
}

fn transform_axis(data: &mut [C64], points: &[usize], axis: usize, fft: &dyn Fft<f64>) {
    let n = points[axis];
    let inner: usize = points[axis + 1..].iter().product();
    let outer: usize = points[..axis].iter().product();
    let mut line = vec![C64::new(0.0, 0.0); n];
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for o in 0..outer {
        let base = o * n * inner;
        for i in 0..inner {
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = data[base + k * inner + i];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (k, v) in line.iter().enumerate() {
                data[base + k * inner + i] = *v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minkowski_examples() {
        assert_eq!(minkowski_square(&MomentumVector::new(1.0, vec![0.0])), -1.0);
        assert_eq!(minkowski_square(&MomentumVector::new(1.0, vec![1.0])), 0.0);
        assert_eq!(minkowski_square(&MomentumVector::new(0.0, vec![3.0])), 9.0);
        assert_eq!(minkowski_square(&EventVector::new(2.0, vec![1.0, 1.0])), -2.0);
    }

    #[test]
    fn signature_bounds() {
        assert!(MetricSignature::new(0).is_err());
        assert!(MetricSignature::new(4).is_err());
        assert_eq!(MetricSignature::new(3).unwrap().weights(), vec![-1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(vec![12], vec![1.0], vec![0.0], false).is_err());
        assert!(GridSpec::new(vec![4], vec![1.0], vec![0.0], false).is_err());
        assert!(GridSpec::new(vec![16, 16], vec![1.0], vec![0.0, 0.0], true).is_err());
        assert!(GridSpec::new(vec![16], vec![-1.0], vec![0.0], false).is_err());
        let g = GridSpec::spacetime(1, 64, 10.0).unwrap();
        for a in 0..2 {
            assert_eq!(g.momentum_spacing(a) * g.spacing(a) * g.points[a] as f64, 2.0 * std::f64::consts::PI);
        }
    }

    #[test]
    fn ravel_roundtrip() {
        let g = GridSpec::new(vec![8, 16, 32], vec![1.0; 3], vec![0.0; 3], false).unwrap();
        for flat in [0, 1, 17, 4095, 2000] {
            assert_eq!(g.ravel(&g.unravel(flat)), flat);
        }
    }

    #[test]
    fn delta_spike_has_flat_spectrum() {
        let g = GridSpec::spacetime(1, 16, 4.0).unwrap();
        let mut f = ComplexField::zeros(g).unwrap();
        f.values[0] = C64::new(1.0, 0.0);
        let ft = spectral_transform(&f, Direction::Forward).unwrap();
        for v in &ft.values {
            assert!((v.norm() - 1.0 / 16.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mismatched_values_rejected() {
        let g = GridSpec::spatial(1, 16, 4.0).unwrap();
        let f = ComplexField { grid: g, values: vec![C64::new(0.0, 0.0); 15] };
        assert!(matches!(spectral_transform(&f, Direction::Forward), Err(Error::Config(_))));
    }

    #[test]
    fn plane_wave_lands_on_its_momentum() {
        // Minkowski plane wave e^{ip·x} with p on the grid concentrates on index p.
        let g = GridSpec::new(vec![16, 32], vec![8.0, 6.0], vec![0.3, -1.1], true).unwrap();
        let (kt, kx) = (3usize, 29usize);
        let p = MomentumVector::new(g.momentum(0, kt), vec![g.momentum(1, kx)]);
        let f = ComplexField::from_fn(g.clone(), |c| {
            C64::from_polar(1.0, p.dot_event(&EventVector::new(c[0], vec![c[1]])))
        })
        .unwrap();
        let ft = spectral_transform(&f, Direction::Forward).unwrap();
        let target = g.ravel(&[kt, kx]);
        let amp = (g.len() as f64).sqrt();
        for (i, v) in ft.values.iter().enumerate() {
            let want = if i == target { amp } else { 0.0 };
            assert!((v - C64::new(want, 0.0)).norm() < 1e-10, "index {i}: {v}");
        }
    }

    #[test]
    fn gaussian_maps_to_gaussian() {
        // ∫dx e^{−ikx} e^{−x²/(2σ²)} = σ√(2π) e^{−σ²k²/2}; the unitary DFT equals
        // that integral divided by Δx·√N. Same per axis with time sign flipped.
        let sigma = 1.3;
        let g = GridSpec::new(vec![64, 64], vec![20.0, 20.0], vec![0.0, 0.0], true).unwrap();
        let f = ComplexField::from_fn(g.clone(), |c| {
            C64::new((-(c[0] * c[0] + c[1] * c[1]) / (2.0 * sigma * sigma)).exp(), 0.0)
        })
        .unwrap();
        let ft = spectral_transform(&f, Direction::Forward).unwrap();
        let scale: f64 = (0..2).map(|a| 1.0 / (g.spacing(a) * (g.points[a] as f64).sqrt())).product();
        for (i, v) in ft.values.iter().enumerate() {
            let k = g.momenta_of(i);
            let want = scale
                * (2.0 * std::f64::consts::PI * sigma * sigma)
                * (-(sigma * sigma) * (k[0] * k[0] + k[1] * k[1]) / 2.0).exp();
            assert!((v - C64::new(want, 0.0)).norm() < 1e-12, "{i}: {v} vs {want}");
        }
    }

    #[test]
    fn csv_roundtrip() {
        let g = GridSpec::new(vec![8, 8], vec![1.0, 2.0], vec![0.0, 0.0], true).unwrap();
        let f = ComplexField::from_fn(g.clone(), |c| C64::new(c[0], c[1] * 0.5)).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = ComplexField::read_csv(g, std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, f);
    }
}
