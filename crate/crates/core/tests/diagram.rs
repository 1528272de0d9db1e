use std::collections::HashMap;

use proptest::prelude::*;
use stpath::diagram::{
    crossing_relabel, defect_slope, emit_loop_integrand, enumerate_contractions, evaluate_tree_amplitude, unitarity_defect, ExternalLeg, Frame,
    FockTruncation, Sense, VertexSpec,
};
use stpath::onshell::{OnShellMomentumState, Species};
use stpath::oracle::diagrams::{brute_force_classes, class_key, fock_amplitude, unitarity_defect_dense};

const DP: f64 = 0.5;

fn leg(species: Species, p: f64, sense: Sense) -> ExternalLeg {
    ExternalLeg::lambda(OnShellMomentumState::new(species, vec![p], 1.0).unwrap(), sense)
}

fn a(p: f64, s: Sense) -> ExternalLeg {
    leg(Species::particle("A"), p, s)
}

fn b(p: f64, s: Sense) -> ExternalLeg {
    leg(Species::particle("B"), p, s)
}

use Sense::{Incoming as In, Outgoing as Out};

fn leg_sets() -> Vec<Vec<ExternalLeg>> {
    vec![
        vec![],
        vec![a(0.0, In), a(0.0, Out)],
        vec![a(0.0, In), b(0.0, Out)],
        vec![a(0.0, In), b(0.0, In), a(0.0, Out), b(0.0, Out)],
        vec![a(0.0, In), a(DP, In), a(0.0, Out), a(DP, Out)],
        vec![a(0.0, In), b(0.0, In), b(DP, Out), a(-DP, Out)],
        vec![a(0.0, In), a(DP, In), a(-DP, In), a(0.0, Out)],
        vec![b(0.0, In), b(0.0, Out), a(DP, In), a(DP, Out)],
    ]
}

fn vertices() -> Vec<VertexSpec> {
    vec![
        VertexSpec::contact("A", "B", 1.0),
        VertexSpec { destroyed: vec!["A".into(), "A".into()], created: vec!["A".into(), "A".into()], coupling: 1.0 },
    ]
}

#[test]
fn enumeration_matches_brute_force() {
    for v in vertices() {
        for legs in leg_sets() {
            for order in 0..=2 {
                let diagrams = enumerate_contractions(&legs, order, &v).unwrap();
                let mut mine: HashMap<_, _> = HashMap::new();
                for d in &diagrams {
                    d.validate(&legs, &v).unwrap();
                    let prev = mine.insert(class_key(d, &legs, &v), d.symmetry_factor);
                    assert!(prev.is_none(), "duplicate class");
                }
                let oracle = brute_force_classes(&legs, order, &v);
                assert_eq!(mine, oracle, "order {order}, {} legs, vertex {:?}", legs.len(), v.destroyed);
            }
        }
    }
}

#[test]
fn order_three_matches_brute_force() {
    let v = VertexSpec::contact("A", "B", 1.0);
    let legs = vec![a(0.0, In), b(0.0, In), a(0.0, Out), b(0.0, Out)];
    let mine: HashMap<_, _> = enumerate_contractions(&legs, 3, &v).unwrap().iter().map(|d| (class_key(d, &legs, &v), d.symmetry_factor)).collect();
    assert_eq!(mine, brute_force_classes(&legs, 3, &v));
}

fn fock() -> FockTruncation {
    FockTruncation::three_mode(&["A", "B"], DP, 4, 1.0)
}

#[test]
fn tree_amplitudes_match_operator_algebra() {
    let v = VertexSpec::contact("A", "B", 0.37);
    let configs = vec![
        vec![a(0.0, In), b(0.0, In), a(0.0, Out), b(0.0, Out)],
        vec![a(DP, In), b(-DP, In), a(-DP, Out), b(DP, Out)],
        vec![a(DP, In), b(0.0, In), a(0.0, Out), b(DP, Out)],
        vec![a(DP, In), b(0.0, In), a(0.0, Out), b(0.0, Out)],
        vec![a(DP, In), b(-DP, In), a(DP, Out), b(-DP, Out)],
    ];
    for legs in configs {
        for order in 0..=1 {
            let oracle = fock_amplitude(&legs, order, &v, &fock()).unwrap();
            let mut total = stpath::C64::new(0.0, 0.0);
            for d in enumerate_contractions(&legs, order, &v).unwrap() {
                let t = evaluate_tree_amplitude(&d, &legs, &v, 1.0, 1e-3).unwrap();
                // Each conservation Kronecker delta carries 1/Δp on the grid.
                total += t.prefactor / DP.powi(t.conservation.len() as i32);
            }
            let scale = oracle.norm().max(1e-300);
            assert!((total - oracle).norm() <= 1e-10 * scale, "order {order}: {total} vs {oracle}");
        }
    }
}

#[test]
fn contact_amplitude_at_rest() {
    let v = VertexSpec::contact("A", "B", 0.5);
    let legs = vec![a(0.0, In), b(0.0, In), a(0.0, Out), b(0.0, Out)];
    let d = &enumerate_contractions(&legs, 1, &v).unwrap()[0];
    let t = evaluate_tree_amplitude(d, &legs, &v, 1.0, 1e-3).unwrap();
    let oracle = fock_amplitude(&legs, 1, &v, &fock()).unwrap();
    assert!((t.prefactor / DP - oracle).norm() <= 1e-10 * oracle.norm());
    assert!(t.loop_integrand.is_none());
}

#[test]
fn crossing_preserves_tree_amplitudes() {
    let v = VertexSpec { destroyed: vec!["A".into(), "A".into()], created: vec!["A".into(), "A".into()], coupling: 0.8 };
    let anti = |p, s| leg(Species::antiparticle("A"), p, s);
    let lambda_legs = vec![a(0.3, In), anti(-0.3, In), a(0.1, Out), anti(-0.1, Out)];
    let time_legs: Vec<ExternalLeg> = lambda_legs.iter().map(crossing_relabel).collect();
    assert_eq!(time_legs[1].sense, Out);
    assert_eq!(time_legs[1].frame, Frame::Time);
    assert_eq!(time_legs[1].state.p, vec![0.3]);

    let dl = enumerate_contractions(&lambda_legs, 1, &v).unwrap();
    let dt = enumerate_contractions(&time_legs, 1, &v).unwrap();
    assert_eq!(dl, dt);
    for d in &dl {
        let al = evaluate_tree_amplitude(d, &lambda_legs, &v, 1.0, 1e-3).unwrap();
        let at = evaluate_tree_amplitude(d, &time_legs, &v, 1.0, 1e-3).unwrap();
        assert_eq!(al, at);
        // Time-frame balance from physical momenta reproduces the λ-frame one.
        for c in &al.conservation {
            let mut phys = vec![0.0; 2];
            for &i in &c.legs {
                let (e, p) = time_legs[i].physical();
                let s = if time_legs[i].sense == In { 1.0 } else { -1.0 };
                phys[0] += s * e;
                phys[1] += s * p[0];
            }
            assert!(phys.iter().zip(&c.mismatch).all(|(x, y)| (x - y).abs() < 1e-12), "{phys:?} vs {:?}", c.mismatch);
        }
    }
}

#[test]
fn bubble_emits_symbolic_integrand() {
    let v = VertexSpec::contact("A", "B", 0.5);
    let legs = vec![a(0.0, In), b(0.0, In), a(0.0, Out), b(0.0, Out)];
    let d = &enumerate_contractions(&legs, 2, &v).unwrap()[0];
    let t = emit_loop_integrand(d, &legs, &v).unwrap();
    let li = t.loop_integrand.unwrap();
    assert_eq!(li.loops, 1);
    assert_eq!(li.factors.iter().filter(|f| f.momentum.loops == vec![1]).count(), 1);
}

const COUPLINGS: [f64; 4] = [0.05, 0.1, 0.2, 0.4];

#[test]
fn first_order_defect_is_quadratic() {
    let fit = defect_slope(1, &VertexSpec::contact("A", "B", 1.0), &fock(), &COUPLINGS).unwrap();
    assert!((fit.slope - 2.0).abs() < 0.05 && fit.r_squared > 0.999, "{fit:?}");
}

#[test]
fn second_order_defect_is_quartic() {
    // (1 + iV − V²/2)(1 − iV − V²/2) = 1 + V⁴/4: the cubic terms cancel.
    let v = VertexSpec::contact("A", "B", 1.0);
    let fit = defect_slope(2, &v, &fock(), &COUPLINGS).unwrap();
    assert!((fit.slope - 4.0).abs() < 0.05, "{fit:?}");
    let ratio = unitarity_defect(2, &v.with_coupling(0.4), &fock()).unwrap() / unitarity_defect(2, &v.with_coupling(0.2), &fock()).unwrap();
    assert!((ratio - 16.0).abs() < 16.0 * 0.05, "{ratio}");
}

#[test]
fn defect_matches_dense_products() {
    let v = VertexSpec::contact("A", "B", 1.0);
    for k in 1..=3 {
        for g in [0.4, 0.8] {
            let fast = unitarity_defect(k, &v.with_coupling(g), &fock()).unwrap();
            let dense = unitarity_defect_dense(k, &v.with_coupling(g), &fock()).unwrap();
            assert!((fast - dense).abs() <= 1e-9 * dense + 1e-15, "k={k} g={g}: {fast} vs {dense}");
        }
    }
}

proptest! {
    #[test]
    fn crossing_is_involution(p in -3.0..3.0f64, m in 0.1..2.0f64, anti in any::<bool>(), incoming in any::<bool>()) {
        let sp = if anti { Species::antiparticle("A") } else { Species::particle("A") };
        let l = ExternalLeg::lambda(OnShellMomentumState::new(sp, vec![p], m).unwrap(), if incoming { In } else { Out });
        let c = crossing_relabel(&l);
        prop_assert_eq!(c.state.energy, l.state.energy);
        prop_assert_eq!(crossing_relabel(&c), l);
    }
}
