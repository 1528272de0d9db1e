//! Oracles for the diagram engine: exhaustive port bijections, operator
//! algebra on sparse Fock vectors, and dense-matrix unitarity.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use num_rational::Ratio;

use crate::diagram::{vertex_matrix, Diagram, Endpoint, ExternalLeg, FockTruncation, Sense, VertexSpec};
use crate::error::{config, Result};
use crate::onshell::energy_of;

/// Isomorphism key: per species, the count matrix of lines between nodes
/// (legs first, then vertices), minimized over vertex relabelings.
pub type ClassKey = (usize, Vec<u32>);

fn key_from_edges(edges: &[(usize, usize, usize)], n_legs: usize, order: usize, n_species: usize) -> ClassKey {
    let nodes = n_legs + order;
    let mut best: Option<Vec<u32>> = None;
    let mut perm: Vec<usize> = (0..order).collect();
    loop {
        let relabel = |x: usize| if x < n_legs { x } else { n_legs + perm[x - n_legs] };
        let mut m = vec![0u32; n_species * nodes * nodes];
        for &(s, a, b) in edges {
            m[(s * nodes + relabel(a)) * nodes + relabel(b)] += 1;
        }
        if best.as_ref().is_none_or(|b| m < *b) {
            best = Some(m);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    (order, best.unwrap_or_default())
}

/// Lexicographic successor; false after the last permutation.
fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn species_index(legs: &[ExternalLeg], vertex: &VertexSpec) -> Vec<String> {
    let mut s: Vec<String> = legs.iter().map(|l| l.base().to_string()).chain(vertex.destroyed.iter().cloned()).collect();
    s.sort();
    s.dedup();
    s
}

/// Key of a production diagram under the oracle's own encoding.
pub fn class_key(d: &Diagram, legs: &[ExternalLeg], vertex: &VertexSpec) -> ClassKey {
    let species = species_index(legs, vertex);
    let node = |e: Endpoint| match e {
        Endpoint::Leg(i) => i,
        Endpoint::Vertex(v) => legs.len() + v,
    };
    let edges: Vec<(usize, usize, usize)> =
        d.lines.iter().map(|l| (species.iter().position(|s| *s == l.species).unwrap(), node(l.from), node(l.to))).collect();
    key_from_edges(&edges, legs.len(), d.order, species.len())
}

/// Every bijection between annihilator and creator slots of ⟨out|V^m|in⟩
/// (V at product positions 0..m, position 0 leftmost) that respects
/// species and operator order, grouped by isomorphism class. Values are
/// counts divided by m!.
pub fn brute_force_classes(legs: &[ExternalLeg], order: usize, vertex: &VertexSpec) -> HashMap<ClassKey, Ratio<u64>> {
    let legs: Vec<ExternalLeg> = legs.iter().map(|l| l.to_lambda()).collect();
    let species = species_index(&legs, vertex);
    let sp = |s: &str| species.iter().position(|x| x == s).unwrap();
    let n = legs.len();
    // (species, node, position); legs sit at position usize::MAX on the ket
    // side and are unconstrained on the bra side.
    let mut creators = Vec::new();
    let mut annihilators = Vec::new();
    for (i, l) in legs.iter().enumerate() {
        match l.sense {
            Sense::Incoming => creators.push((sp(l.base()), i, usize::MAX)),
            Sense::Outgoing => annihilators.push((sp(l.base()), i, None)),
        }
    }
    for j in 0..order {
        for s in &vertex.created {
            creators.push((sp(s), n + j, j));
        }
        for s in &vertex.destroyed {
            annihilators.push((sp(s), n + j, Some(j)));
        }
    }
    let mut counts: HashMap<ClassKey, u64> = HashMap::new();
    if creators.len() == annihilators.len() {
        let mut used = vec![false; creators.len()];
        let mut edges = Vec::new();
        bijections(0, &annihilators, &creators, &mut used, &mut edges, &mut |e| {
            *counts.entry(key_from_edges(e, n, order, species.len())).or_insert(0) += 1;
        });
    }
    let m_fact: u64 = (1..=order as u64).product();
    counts.into_iter().map(|(k, c)| (k, Ratio::new(c, m_fact))).collect()
}

type Slot = (usize, usize, usize);
type Edge = (usize, usize, usize);

fn bijections(
    k: usize,
    ann: &[(usize, usize, Option<usize>)],
    cre: &[Slot],
    used: &mut [bool],
    edges: &mut Vec<Edge>,
    emit: &mut dyn FnMut(&[Edge]),
) {
    if k == ann.len() {
        emit(edges);
        return;
    }
    let (s, node, pos) = ann[k];
    for c in 0..cre.len() {
        let (cs, cnode, cpos) = cre[c];
        // An annihilator in V_j needs its creator strictly to the right.
        let allowed = cs == s && !used[c] && pos.is_none_or(|j| cpos > j);
        if !allowed {
            continue;
        }
        used[c] = true;
        edges.push((s, cnode, node));
        bijections(k + 1, ann, cre, used, edges, emit);
        edges.pop();
        used[c] = false;
    }
}

type Sparse = HashMap<Vec<u8>, C64>;

fn annihilate(v: &Sparse, mode: usize) -> Sparse {
    let mut out = Sparse::new();
    for (occ, a) in v {
        if occ[mode] > 0 {
            let mut o = occ.clone();
            let n = o[mode] as f64;
            o[mode] -= 1;
            *out.entry(o).or_default() += a * n.sqrt();
        }
    }
    out
}

fn create(v: &Sparse, mode: usize) -> Sparse {
    let mut out = Sparse::new();
    for (occ, a) in v {
        let mut o = occ.clone();
        o[mode] += 1;
        let n = o[mode] as f64;
        *out.entry(o).or_default() += a * n.sqrt();
    }
    out
}

fn add_scaled(acc: &mut Sparse, v: &Sparse, s: C64) {
    for (k, a) in v {
        *acc.entry(k.clone()).or_default() += a * s;
    }
}

fn mode_of(fock: &FockTruncation, leg: &ExternalLeg) -> Result<usize> {
    let p = fock
        .momenta
        .iter()
        .position(|q| q.iter().zip(&leg.state.p).all(|(a, b)| (a - b).abs() < 1e-12))
        .ok_or_else(|| crate::Error::Domain("leg momentum is not a Fock mode".into()))?;
    fock.mode(leg.base(), p).ok_or_else(|| crate::Error::Config("leg species not in the Fock truncation".into()))
}

/// Applies V by explicit operator products, one momentum tuple at a time.
fn apply_vertex(v: &Sparse, vertex: &VertexSpec, fock: &FockTruncation) -> Sparse {
    let nm = fock.momenta.len();
    let e = |p: usize| energy_of(&fock.momenta[p], fock.mass);
    let r = vertex.destroyed.len();
    let total = nm.pow((r + vertex.created.len()) as u32);
    let mut out = Sparse::new();
    for code in 0..total {
        let mut c = code;
        let ks: Vec<usize> = (0..r + vertex.created.len()).map(|_| { let k = c % nm; c /= nm; k }).collect();
        let (kin, kout) = ks.split_at(r);
        let ein: f64 = kin.iter().map(|&p| e(p)).sum();
        let eout: f64 = kout.iter().map(|&p| e(p)).sum();
        if (ein - eout).abs() > 1e-12 {
            continue;
        }
        let dims = fock.momenta[0].len();
        let conserved = (0..dims).all(|a| {
            let pin: f64 = kin.iter().map(|&p| fock.momenta[p][a]).sum();
            let pout: f64 = kout.iter().map(|&p| fock.momenta[p][a]).sum();
            (pin - pout).abs() < 1e-12
        });
        if !conserved {
            continue;
        }
        let mut w = v.clone();
        for (s, &p) in vertex.destroyed.iter().zip(kin).rev() {
            w = annihilate(&w, fock.mode(s, p).unwrap());
        }
        for (s, &p) in vertex.created.iter().zip(kout).rev() {
            w = create(&w, fock.mode(s, p).unwrap());
        }
        let norm: f64 = ks.iter().map(|&p| (2.0 * e(p)).sqrt()).product();
        add_scaled(&mut out, &w, C64::new(vertex.coupling * fock.cell / norm, 0.0));
    }
    out
}

/// `Π(2E)^{1/2} ⟨out| (−iV)^m / m! |in⟩` with one-particle states
/// (2E Δp)^{−1/2} a†|0⟩.
pub fn fock_amplitude(legs: &[ExternalLeg], order: usize, vertex: &VertexSpec, fock: &FockTruncation) -> Result<C64> {
    let legs: Vec<ExternalLeg> = legs.iter().map(|l| l.to_lambda()).collect();
    if legs.iter().any(|l| l.is_antiparticle()) {
        return config("the Fock oracle handles particle legs only");
    }
    let vac = vec![0u8; fock.modes()];
    let build = |sense: Sense| -> Result<Sparse> {
        let mut v: Sparse = [(vac.clone(), C64::new(1.0, 0.0))].into_iter().collect();
        for l in legs.iter().filter(|l| l.sense == sense) {
            v = create(&v, mode_of(fock, l)?);
            v.values_mut().for_each(|a| *a /= (2.0 * l.state.energy * fock.cell).sqrt());
        }
        Ok(v)
    };
    let mut state = build(Sense::Incoming)?;
    let out = build(Sense::Outgoing)?;
    for _ in 0..order {
        state = apply_vertex(&state, vertex, fock);
        state.values_mut().for_each(|a| *a *= C64::new(0.0, -1.0));
    }
    let fact: f64 = (1..=order).map(|k| k as f64).product();
    let overlap: C64 = out.iter().map(|(k, a)| a.conj() * state.get(k).copied().unwrap_or_default()).sum();
    let norm: f64 = legs.iter().map(|l| (2.0 * l.state.energy).sqrt()).product();
    Ok(overlap * norm / fact)
}

/// ‖G_k†G_k − 1‖₂ by dense complex products.
pub fn unitarity_defect_dense(k: usize, vertex: &VertexSpec, fock: &FockTruncation) -> Result<f64> {
    let v = vertex_matrix(vertex, fock)?.map(|x| C64::new(x, 0.0));
    let n = v.nrows();
    let mi = v.map(|x| x * C64::new(0.0, -1.0));
    let mut g = DMatrix::<C64>::identity(n, n);
    let mut term = DMatrix::<C64>::identity(n, n);
    for j in 1..=k {
        term = &term * &mi / C64::new(j as f64, 0.0);
        g += &term;
    }
    let defect = g.adjoint() * &g - DMatrix::<C64>::identity(n, n);
    let eig = SymmetricEigen::new(defect).eigenvalues;
    Ok(eig.iter().map(|x| x.abs()).fold(0.0, f64::max))
}
