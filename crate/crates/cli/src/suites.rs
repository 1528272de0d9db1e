//! The invariant suites run by `check`, one per acceptance criterion.

use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use stpath::diagram::{defect_slope, enumerate_contractions, evaluate_tree_amplitude, ExternalLeg, FockTruncation, Sense, VertexSpec};
use stpath::freq::{
    chi_square_gof, expected_frequency, frequency_histogram, frequency_pmf, gaussian_tail, sample_histories, tail_mass, OutcomeDistribution,
};
use stpath::history::{decoherence_matrix, screen_profile, slit_histories, SlitConfig};
use stpath::kernel::{kernel_position, residual_orders, KernelParams};
use stpath::onshell::{biorthonormality_matrix, resolve_identity, OnShellMomentumState, ReducedWavefunction, Species};
use stpath::oracle::diagrams::{brute_force_classes, class_key, fock_amplitude};
use stpath::oracle::kernel::kernel_by_quadrature;
use stpath::oracle::twoslit::model_nulls;
use stpath::propagator::{epsilon_extrapolate, mass_superposition_check, EpsilonSchedule, MassGrid, Route};
use stpath::spacetime::{minkowski_square, ComplexField, EventVector, GridSpec};
use stpath::C64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    /// Runtime bound in seconds, if the criterion sets one.
    pub budget: Option<f64>,
}

pub const SUITES: [(u32, &str, Option<f64>); 10] = [
    (1, "kernel PDE residual order", Some(10.0)),
    (2, "kernel closed form vs quadrature", Some(30.0)),
    (3, "propagator dual route", Some(120.0)),
    (4, "mass superposition", Some(60.0)),
    (5, "bi-orthonormality", None),
    (6, "two-slit", Some(60.0)),
    (7, "diagram enumeration", Some(10.0)),
    (8, "tree amplitude vs Fock algebra", None),
    (9, "unitarity defect slope", Some(120.0)),
    (10, "frequency statistics", Some(60.0)),
];

type Outcome = stpath::Result<(bool, String)>;

/// Runs one suite. Numerical errors count as failures; the runtime bound
/// is part of the verdict.
pub fn run_suite(id: u32) -> SuiteReport {
    let (_, name, budget) = SUITES.iter().find(|s| s.0 == id).copied().unwrap_or((id, "unknown", None));
    let start = Instant::now();
    let outcome = match id {
        1 => kernel_residual(),
        2 => kernel_closed_form(),
        3 => propagator_routes(),
        4 => mass_superposition(),
        5 => biorthonormality(),
        6 => two_slit(),
        7 => enumeration(),
        8 => tree_amplitude(),
        9 => unitarity(),
        10 => frequencies(),
        _ => Ok((false, "no such suite".into())),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (mut passed, mut detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    if let Some(b) = budget {
        if seconds > b {
            passed = false;
            detail = format!("{detail}; over the {b} s budget");
        }
    }
    SuiteReport { id, name: name.into(), passed, detail, seconds, budget }
}

fn gaussian(g: &GridSpec, sigma: f64, kx: f64) -> stpath::Result<ComplexField> {
    ComplexField::from_fn(g.clone(), |c| {
        let r2: f64 = c.iter().map(|v| v * v).sum();
        C64::from_polar((-r2 / (2.0 * sigma * sigma)).exp(), kx * c[1])
    })
}

fn kernel_residual() -> Outcome {
    let g = GridSpec::spacetime(1, 512, 40.0)?;
    let (_, orders) = residual_orders(&gaussian(&g, 2.0, 1.0)?, 0.1, &[0.04, 0.02, 0.01], &KernelParams::new(1.0)?)?;
    let ok = orders.iter().all(|o| (1.9..=2.1).contains(o));
    Ok((ok, format!("orders {orders:.4?}")))
}

fn kernel_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = KernelParams::new(1.0)?;
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 20 {
        let (t, x, l): (f64, f64, f64) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(0.2..1.5));
        if (x * x - t * t).abs() < 0.05 {
            continue;
        }
        let dx = EventVector::new(t, vec![x]);
        let q = kernel_by_quadrature(&dx, l, &p)?;
        worst = worst.max((kernel_position(&dx, l, &p)? - q).norm() / q.norm());
        done += 1;
    }
    Ok((worst < 1e-6, format!("max relative error {worst:.2e} over 20 points")))
}

/// Ten spacelike and ten timelike separations with |s| > 0.05.
pub fn propagator_points() -> Vec<EventVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut space, mut time) = (Vec::new(), Vec::new());
    while space.len() < 10 || time.len() < 10 {
        let dx = EventVector::new(rng.random_range(-3.0..3.0), vec![rng.random_range(-3.0..3.0)]);
        let s = minkowski_square(&dx);
        if s.abs() < 0.05 {
            continue;
        }
        let bucket = if s > 0.0 { &mut space } else { &mut time };
        if bucket.len() < 10 {
            bucket.push(dx);
        }
    }
    space.into_iter().chain(time).collect()
}

fn propagator_routes() -> Outcome {
    let ladder = [4e-3, 2e-3, 1e-3];
    let mut worst: f64 = 0.0;
    for dx in propagator_points() {
        let (_, a) = epsilon_extrapolate(&dx, 1.0, &ladder, Route::Lambda)?;
        let (_, b) = epsilon_extrapolate(&dx, 1.0, &ladder, Route::Momentum)?;
        worst = worst.max((a.intercept - b.intercept).norm() / b.intercept.norm());
    }
    Ok((worst < 1e-3, format!("max relative route difference {worst:.2e} at 20 points")))
}

fn mass_superposition() -> Outcome {
    let dx = EventVector::new(0.2, vec![0.4]);
    let sched = EpsilonSchedule { epsilon: 1e-3, t_max: 5e3, phase_step: 0.2 };
    let mut grid = MassGrid::new(-50.0, 50.0, 4096)?;
    let mut disc = Vec::new();
    for _ in 0..4 {
        disc.push(mass_superposition_check(&dx, 0.5, 1.0, &grid, &sched)?.discrepancy);
        grid = grid.refined();
    }
    let ok = disc[0] < 5e-2 && disc.windows(2).all(|w| w[1] < w[0]);
    Ok((ok, format!("discrepancy under refinement {}", disc.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>().join(", "))))
}

fn biorthonormality() -> Outcome {
    let mut exact = true;
    for grid in [GridSpec::spatial(1, 64, 6.4)?, GridSpec::spatial(2, 8, 3.0)?, GridSpec::spatial(3, 8, 5.0)?] {
        let n = grid.len();
        let m = biorthonormality_matrix(&grid, 1.3)?;
        for i in 0..n {
            for j in 0..n {
                let v = m[i * n + j];
                // The diagonal is x·fl(1/x): 1 or one ulp below.
                exact &= if i == j { v.im == 0.0 && (v.re - 1.0).abs() <= f64::EPSILON } else { v == C64::new(0.0, 0.0) };
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = GridSpec::spatial(1, 32, 4.0)?;
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let values: Vec<C64> = (0..grid.len()).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let psi = ReducedWavefunction::new(grid.clone(), values)?;
        let back = resolve_identity(&psi, 1.0)?;
        worst = worst.max(psi.values.iter().zip(&back.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
    }
    Ok((exact && worst < 1e-12, format!("identity exact: {exact}; reconstruction error {worst:.1e}")))
}

fn two_slit() -> Outcome {
    let cfg = SlitConfig::desk();
    let profile = screen_profile(&cfg)?;
    let both = profile.distribution(true);
    let (a, b) = (profile.single_slit(0), profile.single_slit(1));
    let mean_err = (0..both.probabilities.len())
        .map(|i| (both.probabilities[i] - 0.5 * (a.probabilities[i] + b.probabilities[i])).abs())
        .fold(0.0, f64::max);

    let dist = profile.distribution(false);
    let vis = dist.visibility(10.0);
    let w = cfg.bin_width();
    let minima = dist.minima();
    let nulls = model_nulls(&cfg)?;
    let matched = nulls.iter().filter(|n| n.abs() < cfg.screen.hi - w).all(|n| minima.iter().any(|m| (m - n).abs() <= w));

    let d = decoherence_matrix(&slit_histories(&profile, true))?;
    let off_zero = d.iter().enumerate().all(|(i, r)| r.iter().enumerate().all(|(j, v)| i == j || *v == C64::new(0.0, 0.0)));

    let ok = mean_err < 1e-12 && vis > 0.9 && nulls.len() >= 4 && matched && off_zero;
    Ok((ok, format!("which-slit error {mean_err:.1e}; visibility {vis:.4}; {} nulls matched: {matched}; off-diagonal zero: {off_zero}", nulls.len())))
}

fn leg(species: &str, p: f64, sense: Sense) -> stpath::Result<ExternalLeg> {
    Ok(ExternalLeg::lambda(OnShellMomentumState::new(Species::particle(species), vec![p], 1.0)?, sense))
}

fn enumeration() -> Outcome {
    use Sense::{Incoming as In, Outgoing as Out};
    let dp = 0.5;
    let sets: Vec<Vec<(&str, f64, Sense)>> = vec![
        vec![],
        vec![("A", 0.0, In), ("A", 0.0, Out)],
        vec![("A", 0.0, In), ("B", 0.0, Out)],
        vec![("A", 0.0, In), ("B", 0.0, In), ("A", 0.0, Out), ("B", 0.0, Out)],
        vec![("A", 0.0, In), ("A", dp, In), ("A", 0.0, Out), ("A", dp, Out)],
        vec![("A", 0.0, In), ("B", 0.0, In), ("B", dp, Out), ("A", -dp, Out)],
        vec![("A", 0.0, In), ("A", dp, In), ("A", -dp, In), ("A", 0.0, Out)],
    ];
    let vertices = [
        VertexSpec::contact("A", "B", 1.0),
        VertexSpec { destroyed: vec!["A".into(), "A".into()], created: vec!["A".into(), "A".into()], coupling: 1.0 },
    ];
    let mut cases = 0;
    for v in &vertices {
        for set in &sets {
            let legs: Vec<ExternalLeg> = set.iter().map(|(s, p, d)| leg(s, *p, *d)).collect::<stpath::Result<_>>()?;
            for order in 0..=2 {
                let mine: HashMap<_, _> =
                    enumerate_contractions(&legs, order, v)?.iter().map(|d| (class_key(d, &legs, v), d.symmetry_factor)).collect();
                if mine != brute_force_classes(&legs, order, v) {
                    return Ok((false, format!("mismatch at order {order} with {} legs", legs.len())));
                }
                cases += 1;
            }
        }
    }
    Ok((true, format!("{cases} (legs, order, vertex) cases equal as multisets")))
}

fn tree_amplitude() -> Outcome {
    use Sense::{Incoming as In, Outgoing as Out};
    let dp = 0.5;
    let v = VertexSpec::contact("A", "B", 0.37);
    let fock = FockTruncation::three_mode(&["A", "B"], dp, 4, 1.0);
    let mut worst: f64 = 0.0;
    for (pa, pb, qa, qb) in [(0.0, 0.0, 0.0, 0.0), (dp, -dp, -dp, dp), (dp, 0.0, 0.0, dp), (dp, -dp, dp, -dp)] {
        let legs = vec![leg("A", pa, In)?, leg("B", pb, In)?, leg("A", qa, Out)?, leg("B", qb, Out)?];
        let oracle = fock_amplitude(&legs, 1, &v, &fock)?;
        let mut total = C64::new(0.0, 0.0);
        for d in enumerate_contractions(&legs, 1, &v)? {
            let t = evaluate_tree_amplitude(&d, &legs, &v, 1.0, 1e-3)?;
            total += t.prefactor / dp.powi(t.conservation.len() as i32);
        }
        worst = worst.max((total - oracle).norm() / oracle.norm());
    }
    Ok((worst < 1e-10, format!("max relative error {worst:.1e}")))
}

fn unitarity() -> Outcome {
    let v = VertexSpec::contact("A", "B", 1.0);
    let fock = FockTruncation::three_mode(&["A", "B"], 0.5, 4, 1.0);
    let couplings = [0.05, 0.1, 0.2, 0.4];
    let mut ok = true;
    let mut parts = Vec::new();
    for k in [1usize, 2] {
        let fit = defect_slope(k, &v, &fock, &couplings)?;
        ok &= (fit.slope - (k + 1) as f64).abs() <= 0.05;
        parts.push(format!("k={k}: slope {:.4} (target {})", fit.slope, k + 1));
    }
    Ok((ok, parts.join("; ")))
}

fn frequencies() -> Outcome {
    let mut mean_err: f64 = 0.0;
    for n in (1..=10).chain([100, 1000]) {
        for j in 0..=10 {
            let p = j as f64 / 10.0;
            mean_err = mean_err.max((expected_frequency(n, p)? - p).abs());
        }
    }
    let exact = tail_mass(10_000, 0.3, 0.05)?;
    let gauss = gaussian_tail(10_000, 0.3, 0.05);
    let tail_ok = exact < 1e-6 && (0.1..=10.0).contains(&(exact / gauss));

    let dist = OutcomeDistribution::binary(0.3)?;
    let records = sample_histories(&dist, 100, 10_000, 42)?;
    let pmf: Vec<f64> = frequency_pmf(100, 0.3)?.into_iter().map(|x| x.1).collect();
    let chi = chi_square_gof(&frequency_histogram(&records, 0, 100), &pmf)?;

    let bytes = |seed| -> stpath::Result<Vec<u8>> {
        serde_json::to_vec(&sample_histories(&dist, 100, 10_000, seed)?).map_err(|e| stpath::Error::Io(e.to_string()))
    };
    let identical = bytes(42)? == bytes(42)?;

    let ok = mean_err <= 1e-12 && tail_ok && chi.p_value > 0.01 && identical;
    Ok((
        ok,
        format!(
            "max |<F>-p| {mean_err:.1e}; tail {exact:.3e} vs gaussian {gauss:.3e}; chi-square p {:.3}; reruns identical: {identical}",
            chi.p_value
        ),
    ))
}
