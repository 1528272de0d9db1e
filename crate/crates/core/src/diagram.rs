//! Wick contractions of the interaction operator G = e^{−iV}, tree
//! amplitudes, crossing between λ-sense and time-sense legs, and unitarity
//! of truncated G on a small Fock space.
//!
//! V is normal ordered and carries no time ordering, so in ⟨out|Vᵐ|in⟩ an
//! annihilator contracts only with creators to its right. Internal lines
//! therefore point one way along λ and every diagram is a DAG.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::onshell::{energy_of, ChargeSense, OnShellMomentumState};
use crate::propagator::propagator_momentum;
use crate::spacetime::MomentumVector;

/// Contact vertex: destroys one multiset of base species and creates the same.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSpec {
    pub destroyed: Vec<String>,
    pub created: Vec<String>,
    pub coupling: f64,
}

impl VertexSpec {
    /// `a, b → a, b`.
    pub fn contact(a: &str, b: &str, g: f64) -> Self {
        VertexSpec { destroyed: vec![a.into(), b.into()], created: vec![a.into(), b.into()], coupling: g }
    }

    pub fn validate(&self) -> Result<()> {
        if self.destroyed.is_empty() {
            return config("vertex must destroy at least one particle");
        }
        let (mut d, mut c) = (self.destroyed.clone(), self.created.clone());
        d.sort();
        c.sort();
        if d != c {
            return config("vertex is not self-adjoint: created and destroyed species differ");
        }
        if !self.coupling.is_finite() {
            return config("coupling must be finite");
        }
        Ok(())
    }

    pub fn with_coupling(&self, g: f64) -> Self {
        VertexSpec { coupling: g, ..self.clone() }
    }
}

/// Direction along the path parameter (or along time, in the time frame).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Incoming,
    Outgoing,
}

impl Sense {
    pub fn flipped(self) -> Self {
        match self {
            Sense::Incoming => Sense::Outgoing,
            Sense::Outgoing => Sense::Incoming,
        }
    }
}

/// Which bookkeeping a leg uses. In the λ frame an antiparticle is a
/// negative-energy particle; in the time frame it is a positive-energy
/// antiparticle with reversed three-momentum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Lambda,
    Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalLeg {
    pub state: OnShellMomentumState,
    pub sense: Sense,
    pub frame: Frame,
}

impl ExternalLeg {
    pub fn lambda(state: OnShellMomentumState, sense: Sense) -> Self {
        ExternalLeg { state, sense, frame: Frame::Lambda }
    }

    pub fn base(&self) -> &str {
        &self.state.species.base
    }

    pub fn is_antiparticle(&self) -> bool {
        self.state.species.charge == ChargeSense::Antiparticle
    }

    /// λ-frame four-momentum carried along the leg's own direction:
    /// (E, 𝐩) for particles, (−E, 𝐩) for antiparticles.
    pub fn flow(&self) -> (f64, Vec<f64>) {
        let l = self.to_lambda();
        let e = if l.is_antiparticle() { -l.state.energy } else { l.state.energy };
        (e, l.state.p.clone())
    }

    /// Physical four-momentum (E > 0) in the time frame.
    pub fn physical(&self) -> (f64, Vec<f64>) {
        let t = self.to_time();
        (t.state.energy, t.state.p.clone())
    }

    /// The leg in λ-frame bookkeeping.
    pub fn to_lambda(&self) -> ExternalLeg {
        match self.frame {
            Frame::Lambda => self.clone(),
            Frame::Time => crossing_relabel(self),
        }
    }

    pub fn to_time(&self) -> ExternalLeg {
        match self.frame {
            Frame::Time => self.clone(),
            Frame::Lambda => crossing_relabel(self),
        }
    }
}

/// Switches an antiparticle leg between λ-frame and time-frame bookkeeping:
/// the sense flips (a λ-incoming antiparticle leaves at t → +∞), 𝐩 → −𝐩 and
/// the energy stays positive. Particle legs read the same in both frames
/// and are returned unchanged.
pub fn crossing_relabel(leg: &ExternalLeg) -> ExternalLeg {
    if !leg.is_antiparticle() {
        return leg.clone();
    }
    ExternalLeg {
        state: OnShellMomentumState {
            species: leg.state.species.clone(),
            p: leg.state.p.iter().map(|v| -v).collect(),
            energy: leg.state.energy,
        },
        sense: leg.sense.flipped(),
        frame: match leg.frame {
            Frame::Lambda => Frame::Time,
            Frame::Time => Frame::Lambda,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Endpoint {
    Leg(usize),
    Vertex(usize),
}

/// A contraction, directed along λ: from a creator (incoming leg or vertex
/// output) to an annihilator (outgoing leg or vertex input).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Line {
    pub from: Endpoint,
    pub to: Endpoint,
    pub species: String,
}

impl Line {
    pub fn is_internal(&self) -> bool {
        matches!((self.from, self.to), (Endpoint::Vertex(_), Endpoint::Vertex(_)))
    }
}

/// One isomorphism class of contractions. `symmetry_factor` is the number of
/// operator-level contractions in the class divided by m!; it multiplies
/// (−ig)^m in the amplitude.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Diagram {
    pub order: usize,
    pub lines: Vec<Line>,
    pub symmetry_factor: Ratio<u64>,
}

impl Diagram {
    pub fn internal_lines(&self) -> impl Iterator<Item = &Line> {
        self.lines.iter().filter(|l| l.is_internal())
    }

    /// Independent cycles: internal lines − vertices + vertex components.
    pub fn loop_count(&self) -> usize {
        let comps = vertex_components(self);
        let n_comp = comps.iter().collect::<std::collections::BTreeSet<_>>().len();
        self.internal_lines().count() + n_comp - self.order
    }

    /// Every port used once, species conserved on each line.
    pub fn validate(&self, legs: &[ExternalLeg], vertex: &VertexSpec) -> Result<()> {
        let mut leg_use = vec![0usize; legs.len()];
        let mut ins: Vec<Vec<String>> = vec![Vec::new(); self.order];
        let mut outs: Vec<Vec<String>> = vec![Vec::new(); self.order];
        for l in &self.lines {
            for (end, is_from) in [(l.from, true), (l.to, false)] {
                match end {
                    Endpoint::Leg(i) => {
                        let leg = legs.get(i).ok_or_else(|| crate::Error::Config(format!("line refers to missing leg {i}")))?;
                        if leg.base() != l.species {
                            return config("line species differs from its leg");
                        }
                        let want = if is_from { Sense::Incoming } else { Sense::Outgoing };
                        if leg.to_lambda().sense != want {
                            return config("line direction disagrees with leg sense");
                        }
                        leg_use[i] += 1;
                    }
                    Endpoint::Vertex(v) if v < self.order => {
                        if is_from { outs[v].push(l.species.clone()) } else { ins[v].push(l.species.clone()) }
                    }
                    Endpoint::Vertex(v) => return config(format!("line refers to missing vertex {v}")),
                }
            }
        }
        if leg_use.iter().any(|&u| u != 1) {
            return config("every external leg must be attached exactly once");
        }
        let mut d = vertex.destroyed.clone();
        let mut c = vertex.created.clone();
        d.sort();
        c.sort();
        for v in 0..self.order {
            ins[v].sort();
            outs[v].sort();
            if ins[v] != d || outs[v] != c {
                return config(format!("vertex {v} ports do not match the vertex species"));
            }
        }
        if *self.symmetry_factor.numer() == 0 {
            return config("symmetry factor must be positive");
        }
        Ok(())
    }
}

fn vertex_components(d: &Diagram) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..d.order).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for l in d.internal_lines() {
        if let (Endpoint::Vertex(a), Endpoint::Vertex(b)) = (l.from, l.to) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
    }
    (0..d.order).map(|v| find(&mut parent, v)).collect()
}

/// Relabels vertices to the lexicographically smallest sorted line list.
fn canonical_lines(lines: &[Line], order: usize) -> Vec<Line> {
    let mut best: Option<Vec<Line>> = None;
    for perm in permutations(order) {
        let map = |e: Endpoint| match e {
            Endpoint::Vertex(v) => Endpoint::Vertex(perm[v]),
            leg => leg,
        };
        let mut relabeled: Vec<Line> = lines.iter().map(|l| Line { from: map(l.from), to: map(l.to), species: l.species.clone() }).collect();
        relabeled.sort();
        if best.as_ref().is_none_or(|b| relabeled < *b) {
            best = Some(relabeled);
        }
    }
    best.unwrap_or_default()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for k in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| (0..=k).map(move |pos| {
                let mut q = p.clone();
                q.insert(pos, k);
                q
            }))
            .collect();
    }
    out
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// All contraction classes of ⟨out|Vᵐ|in⟩ for the given legs. Legs in the
/// time frame are crossed into the λ frame first.
pub fn enumerate_contractions(legs: &[ExternalLeg], order: usize, vertex: &VertexSpec) -> Result<Vec<Diagram>> {
    vertex.validate()?;
    let legs: Vec<ExternalLeg> = legs.iter().map(|l| l.to_lambda()).collect();
    let sources: Vec<(Endpoint, String)> = legs
        .iter()
        .enumerate()
        .filter(|(_, l)| l.sense == Sense::Incoming)
        .map(|(i, l)| (Endpoint::Leg(i), l.base().to_string()))
        .collect();
    let sinks: Vec<(usize, String)> =
        legs.iter().enumerate().filter(|(_, l)| l.sense == Sense::Outgoing).map(|(i, l)| (i, l.base().to_string())).collect();

    let mut counts: BTreeMap<Vec<Line>, u64> = BTreeMap::new();
    let mut lines = Vec::new();
    apply_vertices(0, order, vertex, sources, &sinks, &mut lines, &mut counts);

    let m_fact = factorial(order);
    Ok(counts
        .into_iter()
        .map(|(lines, n)| Diagram { order, lines, symmetry_factor: Ratio::new(n, m_fact) })
        .collect())
}

/// Applies vertex `v` (λ order) to the open creators, then recurses.
fn apply_vertices(
    v: usize,
    order: usize,
    vertex: &VertexSpec,
    open: Vec<(Endpoint, String)>,
    sinks: &[(usize, String)],
    lines: &mut Vec<Line>,
    counts: &mut BTreeMap<Vec<Line>, u64>,
) {
    if v == order {
        close_on_sinks(&open, sinks, lines, order, counts);
        return;
    }
    // Each destroyed slot picks a distinct open creator of its species.
    #[allow(clippy::too_many_arguments)]
    fn pick(
        slot: usize,
        v: usize,
        order: usize,
        vertex: &VertexSpec,
        open: &mut Vec<Option<(Endpoint, String)>>,
        sinks: &[(usize, String)],
        lines: &mut Vec<Line>,
        counts: &mut BTreeMap<Vec<Line>, u64>,
    ) {
        if slot == vertex.destroyed.len() {
            let mut next: Vec<(Endpoint, String)> = open.iter().flatten().cloned().collect();
            next.extend(vertex.created.iter().map(|s| (Endpoint::Vertex(v), s.clone())));
            apply_vertices(v + 1, order, vertex, next, sinks, lines, counts);
            return;
        }
        for k in 0..open.len() {
            let Some((end, sp)) = open[k].clone() else { continue };
            if sp != vertex.destroyed[slot] {
                continue;
            }
            open[k] = None;
            lines.push(Line { from: end, to: Endpoint::Vertex(v), species: sp.clone() });
            pick(slot + 1, v, order, vertex, open, sinks, lines, counts);
            lines.pop();
            open[k] = Some((end, sp));
        }
    }
    let mut slots: Vec<Option<(Endpoint, String)>> = open.into_iter().map(Some).collect();
    pick(0, v, order, vertex, &mut slots, sinks, lines, counts);
}

fn close_on_sinks(open: &[(Endpoint, String)], sinks: &[(usize, String)], lines: &mut Vec<Line>, order: usize, counts: &mut BTreeMap<Vec<Line>, u64>) {
    if open.len() != sinks.len() {
        return;
    }
    fn go(k: usize, open: &[(Endpoint, String)], used: &mut [bool], sinks: &[(usize, String)], lines: &mut Vec<Line>, order: usize, counts: &mut BTreeMap<Vec<Line>, u64>) {
        if k == sinks.len() {
            *counts.entry(canonical_lines(lines, order)).or_insert(0) += 1;
            return;
        }
        let (leg, sp) = &sinks[k];
        for j in 0..open.len() {
            if used[j] || open[j].1 != *sp {
                continue;
            }
            used[j] = true;
            lines.push(Line { from: open[j].0, to: Endpoint::Leg(*leg), species: sp.clone() });
            go(k + 1, open, used, sinks, lines, order, counts);
            lines.pop();
            used[j] = false;
        }
    }
    let mut used = vec![false; open.len()];
    go(0, open, &mut used, sinks, lines, order, counts);
}

/// Momentum of a line as integer combinations of leg flows and loop momenta.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MomentumRouting {
    pub legs: Vec<i64>,
    pub loops: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagatorFactor {
    pub species: String,
    pub momentum: MomentumRouting,
}

/// Symbolic product of −i/(q² + m² − iε) factors, integrated over the loop
/// momenta. Never evaluated numerically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopIntegrand {
    pub loops: usize,
    pub factors: Vec<PropagatorFactor>,
}

/// Energy-momentum balance of one connected piece: Σ in-flow − Σ out-flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationDelta {
    pub legs: Vec<usize>,
    /// Energy first, then spatial components.
    pub mismatch: Vec<f64>,
    pub satisfied: bool,
}

/// `prefactor × Π δ(conservation)`, times the loop integral if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeTerm {
    pub prefactor: C64,
    pub conservation: Vec<ConservationDelta>,
    pub loop_integrand: Option<LoopIntegrand>,
}

fn flows(legs: &[ExternalLeg]) -> Vec<(f64, Vec<f64>)> {
    legs.iter().map(|l| l.flow()).collect()
}

fn conservation(d: &Diagram, legs: &[ExternalLeg]) -> Vec<ConservationDelta> {
    // Components over legs and vertices.
    let n = legs.len() + d.order;
    let id = |e: Endpoint| match e {
        Endpoint::Leg(i) => i,
        Endpoint::Vertex(v) => legs.len() + v,
    };
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for l in &d.lines {
        let (a, b) = (find(&mut parent, id(l.from)), find(&mut parent, id(l.to)));
        parent[a] = b;
    }
    let fl = flows(legs);
    let dims = fl.first().map_or(0, |f| f.1.len());
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..legs.len() {
        groups.entry(find(&mut parent, i)).or_default().push(i);
    }
    groups
        .into_values()
        .map(|members| {
            let mut mismatch = vec![0.0; dims + 1];
            let mut scale = 0.0f64;
            for &i in &members {
                let sign = if legs[i].to_lambda().sense == Sense::Incoming { 1.0 } else { -1.0 };
                mismatch[0] += sign * fl[i].0;
                scale = scale.max(fl[i].0.abs());
                for (k, p) in fl[i].1.iter().enumerate() {
                    mismatch[k + 1] += sign * p;
                }
            }
            let satisfied = mismatch.iter().all(|v| v.abs() <= 1e-12 * scale.max(1.0));
            ConservationDelta { legs: members, mismatch, satisfied }
        })
        .collect()
}

/// Routes momentum through internal lines: a spanning forest carries
/// momenta fixed by conservation, each remaining line a fresh loop momentum.
pub fn route_momenta(d: &Diagram, n_legs: usize) -> Vec<MomentumRouting> {
    let internal: Vec<(usize, usize)> = d
        .lines
        .iter()
        .filter_map(|l| match (l.from, l.to) {
            (Endpoint::Vertex(a), Endpoint::Vertex(b)) => Some((a, b)),
            _ => None,
        })
        .collect();
    // Spanning forest by DFS.
    let mut seen = vec![false; d.order];
    let mut tree = vec![false; internal.len()];
    let mut parent_edge = vec![None; d.order];
    let mut order_visit = Vec::new();
    for root in 0..d.order {
        if seen[root] {
            continue;
        }
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(u) = stack.pop() {
            order_visit.push(u);
            for (e, &(a, b)) in internal.iter().enumerate() {
                let w = if a == u { b } else if b == u { a } else { continue };
                if !seen[w] {
                    seen[w] = true;
                    tree[e] = true;
                    parent_edge[w] = Some(e);
                    stack.push(w);
                }
            }
        }
    }
    let loop_ids: Vec<Option<usize>> = {
        let mut k = 0;
        tree.iter().map(|&t| if t { None } else { k += 1; Some(k - 1) }).collect()
    };
    let n_loops = loop_ids.iter().flatten().count();
    let zero = || MomentumRouting { legs: vec![0; n_legs], loops: vec![0; n_loops] };

    // Net inflow at each vertex from legs and loop lines.
    let mut inflow: Vec<MomentumRouting> = (0..d.order).map(|_| zero()).collect();
    for l in &d.lines {
        match (l.from, l.to) {
            (Endpoint::Leg(i), Endpoint::Vertex(v)) => inflow[v].legs[i] += 1,
            (Endpoint::Vertex(v), Endpoint::Leg(i)) => inflow[v].legs[i] -= 1,
            _ => {}
        }
    }
    for (e, &(a, b)) in internal.iter().enumerate() {
        if let Some(k) = loop_ids[e] {
            inflow[a].loops[k] -= 1;
            inflow[b].loops[k] += 1;
        }
    }
    // Subtree sums in reverse DFS order; a tree edge carries the subtree's
    // net inflow out of it.
    let mut out = vec![zero(); internal.len()];
    let mut subtree = inflow.clone();
    for &u in order_visit.iter().rev() {
        if let Some(e) = parent_edge[u] {
            let (a, b) = internal[e];
            let s = subtree[u].clone();
            let sign = if a == u { 1 } else { -1 };
            out[e] = MomentumRouting { legs: s.legs.iter().map(|v| sign * v).collect(), loops: s.loops.iter().map(|v| sign * v).collect() };
            let p = if a == u { b } else { a };
            for (x, y) in subtree[p].legs.iter_mut().zip(&s.legs) {
                *x += y;
            }
            for (x, y) in subtree[p].loops.iter_mut().zip(&s.loops) {
                *x += y;
            }
        }
    }
    for (e, k) in loop_ids.iter().enumerate() {
        if let Some(k) = k {
            out[e].loops[*k] = 1;
        }
    }
    out
}

/// `(−ig)^m × symmetry × Π_{vertex legs} (2E)^{−1/2}`. Legs joined directly
/// to another leg contribute 1: their (2E)^{1/2} pair cancels the 2E of the
/// single-particle overlap.
fn base_prefactor(d: &Diagram, legs: &[ExternalLeg], vertex: &VertexSpec) -> C64 {
    let sym = *d.symmetry_factor.numer() as f64 / *d.symmetry_factor.denom() as f64;
    let mut pre = (C64::new(0.0, -vertex.coupling)).powu(d.order as u32) * sym;
    for l in &d.lines {
        for (end, other) in [(l.from, l.to), (l.to, l.from)] {
            if let (Endpoint::Leg(i), Endpoint::Vertex(_)) = (end, other) {
                pre /= (2.0 * legs[i].state.energy).sqrt();
            }
        }
    }
    pre
}

/// Tree amplitude; internal lines use the momentum-space propagator at the
/// four-momentum forced by conservation.
pub fn evaluate_tree_amplitude(d: &Diagram, legs: &[ExternalLeg], vertex: &VertexSpec, mass: f64, epsilon: f64) -> Result<AmplitudeTerm> {
    d.validate(legs, vertex)?;
    if d.loop_count() > 0 {
        return domain("diagram has loops; use emit_loop_integrand");
    }
    let conservation = conservation(d, legs);
    if conservation.iter().any(|c| !c.satisfied) {
        return Ok(AmplitudeTerm { prefactor: C64::new(0.0, 0.0), conservation, loop_integrand: None });
    }
    let mut pre = base_prefactor(d, legs, vertex);
    let fl = flows(legs);
    for r in route_momenta(d, legs.len()) {
        let mut e = 0.0;
        let mut p = vec![0.0; fl.first().map_or(0, |f| f.1.len())];
        for (c, (fe, fp)) in r.legs.iter().zip(&fl) {
            e += *c as f64 * fe;
            for (x, y) in p.iter_mut().zip(fp) {
                *x += *c as f64 * y;
            }
        }
        pre *= propagator_momentum(&MomentumVector::new(e, p), mass, epsilon)?;
    }
    Ok(AmplitudeTerm { prefactor: pre, conservation, loop_integrand: None })
}

/// Loop diagrams: numeric prefactor plus the symbolic integrand.
pub fn emit_loop_integrand(d: &Diagram, legs: &[ExternalLeg], vertex: &VertexSpec) -> Result<AmplitudeTerm> {
    d.validate(legs, vertex)?;
    let routes = route_momenta(d, legs.len());
    let factors = d
        .internal_lines()
        .zip(routes)
        .map(|(l, r)| PropagatorFactor { species: l.species.clone(), momentum: r })
        .collect();
    Ok(AmplitudeTerm {
        prefactor: base_prefactor(d, legs, vertex),
        conservation: conservation(d, legs),
        loop_integrand: Some(LoopIntegrand { loops: d.loop_count(), factors }),
    })
}

/// Finite bosonic Fock space over species × momentum modes, up to
/// `max_quanta` particles in total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockTruncation {
    pub species: Vec<String>,
    pub momenta: Vec<Vec<f64>>,
    pub max_quanta: usize,
    pub mass: f64,
    /// Momentum cell volume Δ^D p.
    pub cell: f64,
}

impl FockTruncation {
    /// Three modes {−Δp, 0, Δp} in one dimension.
    pub fn three_mode(species: &[&str], dp: f64, max_quanta: usize, mass: f64) -> Self {
        FockTruncation {
            species: species.iter().map(|s| s.to_string()).collect(),
            momenta: vec![vec![-dp], vec![0.0], vec![dp]],
            max_quanta,
            mass,
            cell: dp,
        }
    }

    pub fn modes(&self) -> usize {
        self.species.len() * self.momenta.len()
    }

    pub fn mode(&self, species: &str, p: usize) -> Option<usize> {
        self.species.iter().position(|s| s == species).map(|s| s * self.momenta.len() + p)
    }

    /// Occupation-number basis, every state with at most `max_quanta`.
    pub fn basis(&self) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        let mut cur = vec![0u8; self.modes()];
        fn go(k: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
            if k == cur.len() {
                out.push(cur.clone());
                return;
            }
            for n in 0..=left {
                cur[k] = n as u8;
                go(k + 1, left - n, cur, out);
            }
            cur[k] = 0;
        }
        go(0, self.max_quanta, &mut cur, &mut out);
        out
    }

    fn energy(&self, p: usize) -> f64 {
        energy_of(&self.momenta[p], self.mass)
    }
}

/// `V = g Δp Σ δ(k_in − k_out) Π(2E)^{−1/2} a†…a†a…a` on the truncated space.
/// Conservation of energy and momentum is a Kronecker constraint.
pub fn vertex_matrix(vertex: &VertexSpec, fock: &FockTruncation) -> Result<DMatrix<f64>> {
    vertex.validate()?;
    if fock.max_quanta < vertex.destroyed.len() {
        return config("Fock truncation holds fewer quanta than the vertex destroys");
    }
    for s in vertex.destroyed.iter().chain(&vertex.created) {
        if !fock.species.contains(s) {
            return config(format!("species {s} missing from the Fock truncation"));
        }
    }
    let basis = fock.basis();
    let index: HashMap<Vec<u8>, usize> = basis.iter().cloned().enumerate().map(|(i, b)| (b, i)).collect();
    let nm = fock.momenta.len();
    let tuples = |k: usize| -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for _ in 0..k {
            out = out.into_iter().flat_map(|t| (0..nm).map(move |p| [t.clone(), vec![p]].concat())).collect();
        }
        out
    };
    let tin = tuples(vertex.destroyed.len());
    let tout = tuples(vertex.created.len());
    let dims = fock.momenta[0].len();
    let tol = 1e-12 * fock.mass.max(1.0);
    let mut v = DMatrix::zeros(basis.len(), basis.len());
    for (col, state) in basis.iter().enumerate() {
        for ki in &tin {
            let mut s = state.clone();
            let mut amp = 1.0;
            let mut ok = true;
            for (sp, &p) in vertex.destroyed.iter().zip(ki) {
                let m = fock.mode(sp, p).unwrap();
                if s[m] == 0 {
                    ok = false;
                    break;
                }
                amp *= (s[m] as f64).sqrt();
                s[m] -= 1;
            }
            if !ok {
                continue;
            }
            let e_in: f64 = ki.iter().map(|&p| fock.energy(p)).sum();
            let p_in: Vec<f64> = (0..dims).map(|a| ki.iter().map(|&p| fock.momenta[p][a]).sum()).collect();
            for ko in &tout {
                let e_out: f64 = ko.iter().map(|&p| fock.energy(p)).sum();
                if (e_in - e_out).abs() > tol {
                    continue;
                }
                if (0..dims).any(|a| (p_in[a] - ko.iter().map(|&p| fock.momenta[p][a]).sum::<f64>()).abs() > tol) {
                    continue;
                }
                let mut t = s.clone();
                let mut a2 = amp;
                for (sp, &p) in vertex.created.iter().zip(ko) {
                    let m = fock.mode(sp, p).unwrap();
                    t[m] += 1;
                    a2 *= (t[m] as f64).sqrt();
                }
                let norm: f64 = ki.iter().chain(ko).map(|&p| (2.0 * fock.energy(p)).sqrt()).product();
                let row = *index.get(&t).ok_or_else(|| crate::Error::Config("vertex output leaves the truncation".into()))?;
                v[(row, col)] += vertex.coupling * fock.cell * a2 / norm;
            }
        }
    }
    Ok(v)
}

/// Coefficients of |G_k(v)|² − 1 as a polynomial in v, where
/// G_k(v) = Σ_{j≤k} (−iv)^j / j!. Exact rationals; index = power.
pub fn defect_polynomial(k: usize) -> Vec<Ratio<i64>> {
    let fact = |n: usize| (1..=n as i64).product::<i64>();
    let mut c = vec![Ratio::from_integer(0); 2 * k + 1];
    for j in 0..=k {
        for l in 0..=k {
            // Re[(−i)^j (i)^l] = Re[i^{l−j}] · ... with (−i)^j = (−1)^j i^j.
            let pow = (l as i64 + 3 * j as i64).rem_euclid(4);
            let re = match pow {
                0 => 1,
                2 => -1,
                _ => 0,
            };
            c[j + l] += Ratio::new(re, fact(j) * fact(l));
        }
    }
    c[0] -= 1;
    c
}

/// Operator norm of G_k‡G_k − 1 on the truncated Fock space. V is real
/// symmetric there, so the defect is a polynomial in V and its norm is the
/// largest |p(v)| over the eigenvalues v of V.
pub fn unitarity_defect(k: usize, vertex: &VertexSpec, fock: &FockTruncation) -> Result<f64> {
    if !(1..=3).contains(&k) {
        return config(format!("truncation order {k} outside 1..=3"));
    }
    let v = vertex_matrix(vertex, fock)?;
    let eig = SymmetricEigen::new(v).eigenvalues;
    let poly: Vec<f64> = defect_polynomial(k).iter().map(|r| *r.numer() as f64 / *r.denom() as f64).collect();
    Ok(eig.iter().map(|&x| poly.iter().rev().fold(0.0, |acc, c| acc * x + c).abs()).fold(0.0, f64::max))
}

/// Least-squares slope of log(defect) against log(g).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub r_squared: f64,
}

pub fn defect_slope(k: usize, vertex: &VertexSpec, fock: &FockTruncation, couplings: &[f64]) -> Result<SlopeFit> {
    if couplings.len() < 2 || couplings.iter().any(|g| !(*g > 0.0)) {
        return config("slope fit needs at least two positive couplings");
    }
    let pts: Vec<(f64, f64)> = couplings
        .iter()
        .map(|&g| Ok((g.ln(), unitarity_defect(k, &vertex.with_coupling(g), fock)?.ln())))
        .collect::<Result<_>>()?;
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(SlopeFit { slope, r_squared: if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::onshell::Species;

    fn leg(base: &str, p: f64, sense: Sense) -> ExternalLeg {
        ExternalLeg::lambda(OnShellMomentumState::new(Species::particle(base), vec![p], 1.0).unwrap(), sense)
    }

    fn abab() -> Vec<ExternalLeg> {
        vec![leg("A", 0.0, Sense::Incoming), leg("B", 0.0, Sense::Incoming), leg("A", 0.0, Sense::Outgoing), leg("B", 0.0, Sense::Outgoing)]
    }

    #[test]
    fn identity_term() {
        let legs = vec![leg("A", 0.0, Sense::Incoming), leg("A", 0.0, Sense::Outgoing)];
        let d = enumerate_contractions(&legs, 0, &VertexSpec::contact("A", "B", 1.0)).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].symmetry_factor, Ratio::from_integer(1));
        let mismatch = vec![leg("A", 0.0, Sense::Incoming), leg("B", 0.0, Sense::Outgoing)];
        assert!(enumerate_contractions(&mismatch, 0, &VertexSpec::contact("A", "B", 1.0)).unwrap().is_empty());
    }

    #[test]
    fn contact_and_bubble() {
        let v = VertexSpec::contact("A", "B", 1.0);
        let one = enumerate_contractions(&abab(), 1, &v).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].symmetry_factor, Ratio::from_integer(1));
        assert_eq!(one[0].loop_count(), 0);
        let two = enumerate_contractions(&abab(), 2, &v).unwrap();
        assert_eq!(two.len(), 1);
        assert_eq!(two[0].symmetry_factor, Ratio::new(1, 2));
        assert_eq!(two[0].loop_count(), 1);
        for d in one.iter().chain(&two) {
            d.validate(&abab(), &v).unwrap();
        }
    }

    #[test]
    fn identical_slots_count_twice() {
        let v = VertexSpec { destroyed: vec!["A".into(), "A".into()], created: vec!["A".into(), "A".into()], coupling: 1.0 };
        let legs = vec![leg("A", 0.0, Sense::Incoming), leg("A", 0.1, Sense::Incoming), leg("A", 0.0, Sense::Outgoing), leg("A", 0.1, Sense::Outgoing)];
        let d = enumerate_contractions(&legs, 1, &v).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].symmetry_factor, Ratio::from_integer(4));
    }

    #[test]
    fn self_adjointness_required() {
        let v = VertexSpec { destroyed: vec!["A".into()], created: vec!["B".into()], coupling: 1.0 };
        assert!(v.validate().is_err());
    }

    #[test]
    fn zero_coupling_zero_amplitude() {
        let v = VertexSpec::contact("A", "B", 0.0);
        let d = &enumerate_contractions(&abab(), 1, &v).unwrap()[0];
        let a = evaluate_tree_amplitude(d, &abab(), &v, 1.0, 1e-3).unwrap();
        assert_eq!(a.prefactor, C64::new(0.0, 0.0));
    }

    #[test]
    fn contact_prefactor_at_rest() {
        let v = VertexSpec::contact("A", "B", 0.3);
        let d = &enumerate_contractions(&abab(), 1, &v).unwrap()[0];
        let a = evaluate_tree_amplitude(d, &abab(), &v, 1.0, 1e-3).unwrap();
        // −ig / (2E)² with E = 1.
        assert!((a.prefactor - C64::new(0.0, -0.3 / 4.0)).norm() < 1e-15);
        assert!(a.conservation.iter().all(|c| c.satisfied));
    }

    #[test]
    fn violation_is_flagged() {
        let v = VertexSpec::contact("A", "B", 0.3);
        let mut legs = abab();
        legs[3] = leg("B", 0.5, Sense::Outgoing);
        let d = &enumerate_contractions(&legs, 1, &v).unwrap()[0];
        let a = evaluate_tree_amplitude(d, &legs, &v, 1.0, 1e-3).unwrap();
        assert!(!a.conservation[0].satisfied);
        assert_eq!(a.prefactor, C64::new(0.0, 0.0));
    }

    #[test]
    fn looped_diagram_rejected_for_tree_evaluation() {
        let v = VertexSpec::contact("A", "B", 0.3);
        let d = &enumerate_contractions(&abab(), 2, &v).unwrap()[0];
        assert!(matches!(evaluate_tree_amplitude(d, &abab(), &v, 1.0, 1e-3), Err(crate::Error::Domain(_))));
        let t = emit_loop_integrand(d, &abab(), &v).unwrap();
        let li = t.loop_integrand.unwrap();
        assert_eq!(li.loops, 1);
        assert_eq!(li.factors.len(), 2);
        // Two lines share the A+B flow, written through either side.
        let total: Vec<i64> = (0..4).map(|i| li.factors.iter().map(|f| f.momentum.legs[i]).sum()).collect();
        assert!(total == vec![1, 1, 0, 0] || total == vec![0, 0, 1, 1], "{total:?}");
    }

    #[test]
    fn crossing_examples() {
        let anti = ExternalLeg::lambda(OnShellMomentumState::new(Species::antiparticle("A"), vec![0.7], 1.0).unwrap(), Sense::Incoming);
        let c = crossing_relabel(&anti);
        assert_eq!(c.state.p, vec![-0.7]);
        assert_eq!(c.state.energy, anti.state.energy);
        assert_eq!(c.sense, Sense::Outgoing);
        assert_eq!(c.frame, Frame::Time);
        assert_eq!(crossing_relabel(&c), anti);
        let part = leg("A", 0.4, Sense::Incoming);
        assert_eq!(crossing_relabel(&part), part);
    }

    #[test]
    fn defect_polynomials() {
        let r = |n, d| Ratio::new(n, d);
        assert_eq!(defect_polynomial(1), vec![r(0, 1), r(0, 1), r(1, 1)]);
        assert_eq!(defect_polynomial(2), vec![r(0, 1), r(0, 1), r(0, 1), r(0, 1), r(1, 4)]);
        let p3 = defect_polynomial(3);
        assert_eq!(&p3[..4], &[r(0, 1); 4]);
        assert_eq!(p3[4], r(-1, 12));
        assert_eq!(p3[6], r(1, 36));
    }

    #[test]
    fn zero_coupling_is_unitary() {
        let fock = FockTruncation::three_mode(&["A", "B"], 0.5, 4, 1.0);
        assert_eq!(unitarity_defect(2, &VertexSpec::contact("A", "B", 0.0), &fock).unwrap(), 0.0);
        let tiny = FockTruncation::three_mode(&["A", "B"], 0.5, 1, 1.0);
        assert!(unitarity_defect(1, &VertexSpec::contact("A", "B", 0.1), &tiny).is_err());
    }
}
