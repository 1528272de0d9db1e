use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stpath::oracle::propagator::feynman_closed_form;
use stpath::propagator::{
    epsilon_extrapolate, mass_superposition_check, mass_superposition_direct, propagator, EpsilonSchedule, MassGrid, Route,
};
use stpath::spacetime::{minkowski_square, EventVector};

const EPS_LADDER: [f64; 3] = [4e-3, 2e-3, 1e-3];

fn rel(a: stpath::C64, b: stpath::C64) -> f64 {
    (a - b).norm() / b.norm()
}

/// Ten spacelike and ten timelike separations, clear of the light cone.
fn test_points() -> Vec<EventVector> {
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

#[test]
fn routes_agree_at_fixed_epsilon() {
    let sched = EpsilonSchedule::new(1e-3).unwrap();
    for dx in test_points() {
        let a = propagator(&dx, 1.0, &sched, Route::Lambda).unwrap();
        let b = propagator(&dx, 1.0, &sched, Route::Momentum).unwrap();
        assert!(rel(a, b) < 1e-3, "{dx:?}: {a} vs {b}");
    }
}

#[test]
fn extrapolations_are_linear_and_agree() {
    for dx in test_points() {
        let (_, lam) = epsilon_extrapolate(&dx, 1.0, &EPS_LADDER, Route::Lambda).unwrap();
        let (_, mom) = epsilon_extrapolate(&dx, 1.0, &EPS_LADDER, Route::Momentum).unwrap();
        assert!(lam.relative_residual < 1e-3, "{dx:?}: {}", lam.relative_residual);
        assert!(mom.relative_residual < 1e-3, "{dx:?}: {}", mom.relative_residual);
        assert!(rel(lam.intercept, mom.intercept) < 1e-3, "{dx:?}");
        // Bessel closed form is a third, independent route.
        let exact = feynman_closed_form(&dx, 1.0).unwrap();
        assert!(rel(mom.intercept, exact) < 1e-4, "{dx:?}: {} vs {exact}", mom.intercept);
    }
}

#[test]
fn spacelike_reference_point() {
    let dx = EventVector::new(0.0, vec![2.0]);
    let sched = EpsilonSchedule::new(1e-3).unwrap();
    let lam = propagator(&dx, 1.0, &sched, Route::Lambda).unwrap();
    let mom = propagator(&dx, 1.0, &sched, Route::Momentum).unwrap();
    assert!(rel(lam, mom) < 1e-3);
    // K₀(2)/2π
    assert!((lam.re - 0.113_893_872_749_533_4 / (2.0 * std::f64::consts::PI)).abs() < 1e-4);
}

#[test]
fn three_dimensional_routes_agree() {
    let sched = EpsilonSchedule::new(1e-3).unwrap();
    for dx in [EventVector::new(0.0, vec![1.0, 0.0, 0.0]), EventVector::new(0.5, vec![0.6, -0.8, 0.3]), EventVector::new(2.0, vec![0.3, 0.2, 0.1])] {
        let a = propagator(&dx, 1.0, &sched, Route::Lambda).unwrap();
        let b = propagator(&dx, 1.0, &sched, Route::Momentum).unwrap();
        assert!(rel(a, b) < 1e-3, "{dx:?}: {a} vs {b}");
    }
}

#[test]
fn spacelike_magnitude_decays() {
    let sched = EpsilonSchedule::new(1e-3).unwrap();
    for route in [Route::Lambda, Route::Momentum] {
        let mags: Vec<f64> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&r| propagator(&EventVector::new(0.0, vec![r]), 1.0, &sched, route).unwrap().norm())
            .collect();
        assert!(mags[0] > mags[1] && mags[1] > mags[2], "{route:?}: {mags:?}");
    }
}

#[test]
fn even_under_reflection() {
    let sched = EpsilonSchedule::new(1e-3).unwrap();
    for dx in test_points().into_iter().step_by(4) {
        for route in [Route::Lambda, Route::Momentum] {
            let a = propagator(&dx, 1.0, &sched, route).unwrap();
            let b = propagator(&dx.neg(), 1.0, &sched, route).unwrap();
            assert_eq!(a, b);
        }
    }
}

/// Shorter T′ cutoff and coarser phase step than the default: the mass
/// window's chirp rate grows with the grid range.
fn mass_schedule() -> EpsilonSchedule {
    EpsilonSchedule { epsilon: 1e-3, t_max: 5e3, phase_step: 0.2 }
}

#[test]
fn mass_superposition_desk_and_refinement() {
    let dx = EventVector::new(0.2, vec![0.4]);
    let mut grid = MassGrid::new(-50.0, 50.0, 4096).unwrap();
    let mut disc = Vec::new();
    for _ in 0..4 {
        disc.push(mass_superposition_check(&dx, 0.5, 1.0, &grid, &mass_schedule()).unwrap().discrepancy);
        grid = grid.refined();
    }
    assert!(disc[0] < 5e-2, "{disc:?}");
    assert!(disc.windows(2).all(|w| w[1] < w[0]), "{disc:?}");
}

#[test]
fn rearranged_sum_matches_cell_by_cell_sum() {
    let dx = EventVector::new(0.2, vec![0.4]);
    let grid = MassGrid::new(-8.0, 8.0, 16).unwrap();
    let sched = EpsilonSchedule::new(1e-2).unwrap();
    let check = mass_superposition_check(&dx, 0.5, 1.0, &grid, &sched).unwrap();
    let direct = mass_superposition_direct(&dx, 0.5, 1.0, &grid, &sched).unwrap();
    assert!(rel(check.rhs, direct) < 1e-6, "{} vs {direct}", check.rhs);
}

#[test]
fn large_intrinsic_length_degrades_and_is_flagged() {
    let dx = EventVector::new(0.2, vec![0.4]);
    let grid = MassGrid::new(-50.0, 50.0, 4096).unwrap();
    let checks: Vec<_> = [2.0, 8.0, 32.0, 128.0, 256.0]
        .iter()
        .map(|&t| mass_superposition_check(&dx, t, 1.0, &grid, &mass_schedule()).unwrap())
        .collect();
    assert!(checks.windows(2).all(|w| w[1].discrepancy > w[0].discrepancy));
    assert!(!checks[0].under_resolved);
    assert!(checks[4].under_resolved);
}
