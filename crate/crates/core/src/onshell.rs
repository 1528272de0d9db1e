//! On-shell particle and antiparticle momentum states and the induced inner
//! product. Continuum deltas become Kronecker deltas divided by the momentum
//! cell volume.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::spacetime::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChargeSense {
    Particle,
    Antiparticle,
}

impl ChargeSense {
    pub fn flipped(self) -> Self {
        match self {
            ChargeSense::Particle => ChargeSense::Antiparticle,
            ChargeSense::Antiparticle => ChargeSense::Particle,
        }
    }
}

/// Base type label plus charge sense.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Species {
    pub base: String,
    pub charge: ChargeSense,
}

impl Species {
    pub fn particle(base: &str) -> Self {
        Species { base: base.to_string(), charge: ChargeSense::Particle }
    }

    pub fn antiparticle(base: &str) -> Self {
        Species { base: base.to_string(), charge: ChargeSense::Antiparticle }
    }

    pub fn conjugate(&self) -> Self {
        Species { base: self.base.clone(), charge: self.charge.flipped() }
    }
}

/// `√(|p|² + m²)`.
pub fn energy_of(p: &[f64], m: f64) -> f64 {
    (p.iter().map(|v| v * v).sum::<f64>() + m * m).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnShellMomentumState {
    pub species: Species,
    pub p: Vec<f64>,
    pub energy: f64,
}

impl OnShellMomentumState {
    pub fn new(species: Species, p: Vec<f64>, m: f64) -> Result<Self> {
        if !(m.is_finite() && m > 0.0) {
            return config(format!("mass must be positive, got {m}"));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return domain("momentum components must be finite");
        }
        let energy = energy_of(&p, m);
        Ok(OnShellMomentumState { species, p, energy })
    }

    /// Relabels a particle state of momentum −𝐩 as the antiparticle state
    /// of momentum 𝐩 (and back). Energy is untouched.
    pub fn reversed_relabel(&self) -> Self {
        OnShellMomentumState {
            species: self.species.conjugate(),
            p: self.p.iter().map(|v| -v).collect(),
            energy: self.energy,
        }
    }
}

/// Amplitudes ψ(𝐩) on a spatial momentum lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedWavefunction {
    pub grid: GridSpec,
    pub values: Vec<C64>,
}

impl ReducedWavefunction {
    pub fn new(grid: GridSpec, values: Vec<C64>) -> Result<Self> {
        grid.validate()?;
        if grid.time_axis {
            return config("reduced wavefunctions live on a spatial momentum grid");
        }
        if values.len() != grid.len() {
            return config(format!("{} values for {} grid points", values.len(), grid.len()));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return domain("wavefunction values must be finite");
        }
        Ok(ReducedWavefunction { grid, values })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> C64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.coords_of(i))).collect();
        ReducedWavefunction::new(grid, values)
    }

    /// Momentum cell volume Δ^D p.
    pub fn cell(&self) -> f64 {
        self.grid.cell_volume()
    }

    /// Rescaled so the induced norm is 1.
    pub fn normalized(&self, m: f64) -> Result<Self> {
        let n = induced_inner_product(self, self, m)?.re;
        if !(n > 0.0) {
            return domain("cannot normalize a zero wavefunction");
        }
        let s = 1.0 / n.sqrt();
        Ok(ReducedWavefunction { grid: self.grid.clone(), values: self.values.iter().map(|v| v * s).collect() })
    }
}

/// `Σ Δ^D p/(2E_p) ψ′*(𝐩) ψ(𝐩)`.
pub fn induced_inner_product(a: &ReducedWavefunction, b: &ReducedWavefunction, m: f64) -> Result<C64> {
    if a.grid != b.grid {
        return config("inner product of wavefunctions on different grids");
    }
    if !(m.is_finite() && m > 0.0) {
        return config(format!("mass must be positive, got {m}"));
    }
    let cell = a.cell();
    let mut acc = C64::new(0.0, 0.0);
    for (i, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
        let e = energy_of(&a.grid.coords_of(i), m);
        acc += x.conj() * y * (cell / (2.0 * e));
    }
    Ok(acc)
}

/// Flat index of the grid point at momentum `p`, or a domain error.
pub fn grid_index(grid: &GridSpec, p: &[f64]) -> Result<usize> {
    if p.len() != grid.axes() {
        return config(format!("momentum has {} components, grid has {} axes", p.len(), grid.axes()));
    }
    let mut idx = Vec::with_capacity(p.len());
    for (a, &v) in p.iter().enumerate() {
        let h = grid.spacing(a);
        let k = ((v - grid.origin[a]) / h).round();
        let n = grid.points[a] as i64;
        let k = k as i64;
        if (v - grid.origin[a] - k as f64 * h).abs() > 1e-9 * h || k < -n / 2 || k >= n / 2 {
            return domain(format!("momentum component {v} is not on the grid"));
        }
        idx.push(k.rem_euclid(n) as usize);
    }
    Ok(grid.ravel(&idx))
}

/// `⟨𝐩|t₀,𝐩₀;λ₀⟩ = (2E_p)^{-1} δ^D(𝐩 − 𝐩₀)` on the grid; independent of t₀.
pub fn onshell_overlap(grid: &GridSpec, p: &[f64], p0: &[f64], _t0: f64, m: f64) -> Result<C64> {
    let i = grid_index(grid, p)?;
    let j = grid_index(grid, p0)?;
    if !(m.is_finite() && m > 0.0) {
        return config(format!("mass must be positive, got {m}"));
    }
    if i != j {
        return Ok(C64::new(0.0, 0.0));
    }
    let e = energy_of(&grid.coords_of(i), m);
    Ok(C64::new(1.0 / (2.0 * e * grid.cell_volume()), 0.0))
}

/// `M(p, p′) = 2E_p Δ^D p ⟨p|p′⟩`, row-major over grid points.
pub fn biorthonormality_matrix(grid: &GridSpec, m: f64) -> Result<Vec<C64>> {
    let n = grid.len();
    let cell = grid.cell_volume();
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        let pi = grid.coords_of(i);
        let e = energy_of(&pi, m);
        for j in 0..n {
            let ov = onshell_overlap(grid, &pi, &grid.coords_of(j), 0.0, m)?;
            out[i * n + j] = ov * (2.0 * e * cell);
        }
    }
    Ok(out)
}

/// `ψ(𝐩) = Σ_{𝐩′} Δ^D p (2E_{𝐩′}) ⟨𝐩|𝐩′⟩ ψ(𝐩′)`.
pub fn resolve_identity(psi: &ReducedWavefunction, m: f64) -> Result<ReducedWavefunction> {
    let grid = &psi.grid;
    let cell = grid.cell_volume();
    let mut out = vec![C64::new(0.0, 0.0); grid.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        let p = grid.coords_of(i);
        let mut acc = C64::new(0.0, 0.0);
        for (j, v) in psi.values.iter().enumerate() {
            let q = grid.coords_of(j);
            let ov = onshell_overlap(grid, &p, &q, 0.0, m)?;
            if ov != C64::new(0.0, 0.0) {
                acc += ov * (cell * 2.0 * energy_of(&q, m)) * v;
            }
        }
        *slot = acc;
    }
    ReducedWavefunction::new(grid.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_examples() {
        assert_eq!(energy_of(&[0.0], 1.0), 1.0);
        assert_eq!(energy_of(&[3.0], 4.0), 5.0);
        assert_eq!(energy_of(&[0.0, 3.0, 0.0], 4.0), 5.0);
        assert!((energy_of(&[1.0], 1.0) - 2f64.sqrt()).abs() < 1e-15);
    }

    fn grid() -> GridSpec {
        // Δp = 0.1 with 64 points.
        GridSpec::spatial(1, 64, 6.4).unwrap()
    }

    #[test]
    fn overlap_examples() {
        let g = grid();
        let v = onshell_overlap(&g, &[0.0], &[0.0], 0.0, 1.0).unwrap();
        assert!((v.re - 5.0).abs() < 1e-12);
        assert_eq!(onshell_overlap(&g, &[0.1], &[0.0], 0.0, 1.0).unwrap(), C64::new(0.0, 0.0));
        let a = onshell_overlap(&g, &[0.3], &[0.3], -3.0, 1.0).unwrap();
        let b = onshell_overlap(&g, &[0.3], &[0.3], 7.0, 1.0).unwrap();
        assert_eq!(a, b);
        assert!(onshell_overlap(&g, &[0.05], &[0.0], 0.0, 1.0).is_err());
        assert!(onshell_overlap(&g, &[100.0], &[0.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn disjoint_support_is_orthogonal() {
        let g = grid();
        let a = ReducedWavefunction::from_fn(g.clone(), |p| if p[0] < 0.0 { C64::new(1.0, 0.5) } else { C64::new(0.0, 0.0) }).unwrap();
        let b = ReducedWavefunction::from_fn(g, |p| if p[0] >= 0.0 { C64::new(2.0, 0.0) } else { C64::new(0.0, 0.0) }).unwrap();
        assert_eq!(induced_inner_product(&a, &b, 1.0).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn normalization() {
        let a = ReducedWavefunction::from_fn(grid(), |p| C64::new((-p[0] * p[0]).exp(), p[0])).unwrap();
        let n = a.normalized(1.0).unwrap();
        assert!((induced_inner_product(&n, &n, 1.0).unwrap() - C64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn relabel_involution() {
        let s = OnShellMomentumState::new(Species::particle("A"), vec![0.7], 1.0).unwrap();
        let r = s.reversed_relabel();
        assert_eq!(r.species, Species::antiparticle("A"));
        assert_eq!(r.p, vec![-0.7]);
        assert_eq!(r.energy, s.energy);
        assert_eq!(r.reversed_relabel(), s);
    }
}
