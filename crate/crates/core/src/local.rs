//! LOCAL-model simulation of the degree-reduction step.
//!
//! Each round every vertex recomputes its state from its own state and its
//! neighbours' states of the previous round, plus its random tape. The
//! engine is three-valued: a state may be [`state::UNKNOWN`] (pending), and
//! a vertex with an unknown neighbour becomes unknown itself. Known states
//! always equal the states of the fully-known simulation.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::graph::{Graph, VertexId};
use crate::tape::Tape;

/// Packed per-vertex states: a 4-bit kind and two 30-bit operands.
pub mod state {
    use crate::graph::VertexId;

    pub const UNKNOWN: u64 = u64::MAX;
    pub const IDLE: u64 = 0;

    const KIND_SHIFT: u32 = 60;
    const A_SHIFT: u32 = 30;
    const MASK: u64 = (1 << 30) - 1;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    #[repr(u8)]
    pub enum Kind {
        Idle = 0,
        Propose = 1,
        Offer = 2,
        Commit = 3,
        Marked = 4,
        Matched = 5,
        InIs = 6,
        Dominated = 7,
        Unknown = 15,
    }

    pub fn pack(kind: Kind, a: u32, b: u32) -> u64 {
        ((kind as u64) << KIND_SHIFT) | ((u64::from(a) & MASK) << A_SHIFT) | (u64::from(b) & MASK)
    }

    pub fn kind(s: u64) -> Kind {
        match s >> KIND_SHIFT {
            0 => Kind::Idle,
            1 => Kind::Propose,
            2 => Kind::Offer,
            3 => Kind::Commit,
            4 => Kind::Marked,
            5 => Kind::Matched,
            6 => Kind::InIs,
            7 => Kind::Dominated,
            _ => Kind::Unknown,
        }
    }

    pub fn a(s: u64) -> u32 {
        ((s >> A_SHIFT) & MASK) as u32
    }

    pub fn b(s: u64) -> u32 {
        (s & MASK) as u32
    }

    /// Encodes an optional id as `0` (none) or `id + 1`.
    pub fn opt(id: Option<VertexId>) -> u32 {
        id.map_or(0, |v| v + 1)
    }

    pub fn unopt(x: u32) -> Option<VertexId> {
        x.checked_sub(1)
    }

    pub fn matched(partner: VertexId) -> u64 {
        pack(Kind::Matched, partner, 0)
    }

    pub const IN_IS: u64 = (Kind::InIs as u64) << KIND_SHIFT;
    pub const DOMINATED: u64 = (Kind::Dominated as u64) << KIND_SHIFT;
    pub const MARKED: u64 = (Kind::Marked as u64) << KIND_SHIFT;

    pub fn is_removed(s: u64) -> bool {
        matches!(kind(s), Kind::Matched | Kind::InIs | Kind::Dominated)
    }

    pub fn is_alive(s: u64) -> bool {
        s != UNKNOWN && !is_removed(s)
    }
}

use state::{Kind, UNKNOWN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Matching,
    Mis,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Matching => "matching",
            Mode::Mis => "mis",
        })
    }
}

/// Rounds in one execution of the degree-reduction step.
pub const R_LOCAL: u32 = 4;

/// Which variant of the round rule to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// High vertices (alive degree above `theta`) propose or mark.
    Reduction,
    /// Random-priority Luby for MIS; proposals from every vertex for matching.
    Finisher,
}

#[derive(Debug, Clone, Copy)]
pub struct Rule<'t> {
    pub mode: Mode,
    pub variant: Variant,
    pub theta: u64,
    pub tape: &'t Tape,
    /// Stream family; execution `k` draws from stream `family | k`.
    pub family: u64,
}

impl<'t> Rule<'t> {
    pub fn reduction(mode: Mode, theta: u64, tape: &'t Tape, family: u64) -> Self {
        Rule { mode, variant: Variant::Reduction, theta, tape, family }
    }

    pub fn finisher(mode: Mode, tape: &'t Tape, family: u64) -> Self {
        Rule { mode, variant: Variant::Finisher, theta: 0, tape, family }
    }

    /// LOCAL rounds per execution.
    pub fn rounds(&self) -> u32 {
        match (self.mode, self.variant) {
            (Mode::Mis, Variant::Finisher) => 3,
            _ => R_LOCAL,
        }
    }

    fn stream(&self, k: u32) -> u64 {
        self.family | u64::from(k)
    }

    fn priority(&self, k: u32, u: VertexId) -> (u64, VertexId) {
        (self.tape.word(self.stream(k), 4 * u64::from(u) + 1), u)
    }

    /// State of `v` after round `q` (0-based) of execution `k`, from the
    /// previous states `cur` of its closed neighbourhood. All of them must
    /// be known.
    pub fn eval(&self, q: u32, k: u32, v: VertexId, nbrs: &[VertexId], cur: &[u64]) -> u64 {
        let own = cur[v as usize];
        if state::is_removed(own) {
            return own;
        }
        let stream = self.stream(k);
        let vi = 4 * u64::from(v);
        let alive_deg = || nbrs.iter().filter(|&&u| state::is_alive(cur[u as usize])).count() as u64;
        match (self.mode, q) {
            (Mode::Matching, 0) => {
                let deg = alive_deg();
                if deg > self.theta && deg > 0 {
                    let pick = self.tape.below(stream, vi, deg) as usize;
                    let target = nbrs.iter().copied().filter(|&u| state::is_alive(cur[u as usize])).nth(pick);
                    state::pack(Kind::Propose, target.unwrap_or(0), 0)
                } else {
                    state::IDLE
                }
            }
            (Mode::Matching, 1) => {
                let out = (state::kind(own) == Kind::Propose).then(|| state::a(own));
                let accepted = nbrs
                    .iter()
                    .copied()
                    .filter(|&u| {
                        let s = cur[u as usize];
                        state::kind(s) == Kind::Propose && state::a(s) == v
                    })
                    .min_by_key(|&u| self.priority(k, u));
                state::pack(Kind::Offer, state::opt(out), state::opt(accepted))
            }
            (Mode::Matching, 2) => {
                let out = state::unopt(state::a(own));
                let inbound = state::unopt(state::b(own));
                let out_ok = out.filter(|&t| {
                    let s = cur[t as usize];
                    state::kind(s) == Kind::Offer && state::unopt(state::b(s)) == Some(v)
                });
                let partner = match (inbound, out_ok) {
                    (Some(i), Some(o)) => Some(if self.tape.coin(stream, vi + 2) { o } else { i }),
                    (Some(i), None) => Some(i),
                    (None, o) => o,
                };
                state::pack(Kind::Commit, state::opt(partner), 0)
            }
            (Mode::Matching, _) => {
                let partner = state::unopt(state::a(own));
                match partner {
                    Some(p) => {
                        let s = cur[p as usize];
                        if state::kind(s) == Kind::Commit && state::unopt(state::a(s)) == Some(v) {
                            state::matched(p)
                        } else {
                            state::IDLE
                        }
                    }
                    None => state::IDLE,
                }
            }
            (Mode::Mis, 0) => match self.variant {
                Variant::Reduction => {
                    if alive_deg() > self.theta && self.tape.coin(stream, vi + 3) {
                        state::MARKED
                    } else {
                        state::IDLE
                    }
                }
                Variant::Finisher => state::MARKED,
            },
            (Mode::Mis, 1) => {
                if own != state::MARKED {
                    return state::IDLE;
                }
                let marked = nbrs.iter().copied().filter(|&u| cur[u as usize] == state::MARKED);
                let wins = match self.variant {
                    Variant::Reduction => marked.into_iter().all(|u| u > v),
                    Variant::Finisher => {
                        let mine = self.priority(k, v);
                        marked.into_iter().all(|u| self.priority(k, u) > mine)
                    }
                };
                if wins {
                    state::IN_IS
                } else {
                    state::IDLE
                }
            }
            (Mode::Mis, 2) => {
                if nbrs.iter().any(|&u| cur[u as usize] == state::IN_IS) {
                    state::DOMINATED
                } else {
                    state::IDLE
                }
            }
            (Mode::Mis, _) => own,
        }
    }
}

/// Marks "known forever" in [`Run::known_until`].
pub const FOREVER: u32 = u32::MAX;
/// "Never happened" in round-valued fields.
pub const NEVER: u32 = u32::MAX;

/// Pending-aware simulation engine.
#[derive(Debug, Clone, Copy)]
pub struct Engine<'a> {
    pub graph: &'a Graph,
    pub rule: Rule<'a>,
    /// At execution boundaries, treat a known idle vertex whose closed
    /// neighbourhood has degree upper bounds `≤ theta` as settled alive.
    pub inert_exception: bool,
    /// Extra neighbours per vertex that are outside the simulated graph and
    /// always unknown.
    pub phantom: Option<&'a [u32]>,
    /// Vertices whose states are replayed from a transcript: entry `t` is
    /// the state after `t` rounds, the last entry persists.
    pub fixed: Option<&'a BTreeMap<VertexId, Vec<u64>>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    /// States when the run stopped.
    pub states: Vec<u64>,
    /// `K` means the states after rounds `0..K` are known; [`FOREVER`] for
    /// settled vertices.
    pub known_until: Vec<u32>,
    /// Round at which the vertex was removed or certified inert.
    pub settled_at: Vec<u32>,
    pub removed_at: Vec<u32>,
    pub rounds: u32,
    /// Every known vertex is settled; later rounds change nothing.
    pub quiescent: bool,
    /// Some known vertex has more known-alive neighbours than `theta`.
    pub definitely_high: bool,
    /// Full state table, `rows[t]` after `t` rounds, when requested.
    pub rows: Option<Vec<Vec<u64>>>,
}

impl Run {
    pub fn is_settled(&self, v: VertexId) -> bool {
        self.settled_at[v as usize] != NEVER
    }

    /// Completed executions of `v` (known prefix), with settled vertices
    /// reported as `horizon`.
    pub fn finished_executions(&self, v: VertexId, rounds_per_exec: u32, horizon: u64) -> u64 {
        match self.known_until[v as usize] {
            FOREVER => horizon,
            0 => 0,
            k => (u64::from(k - 1) / u64::from(rounds_per_exec)).min(horizon),
        }
    }
}

impl<'a> Engine<'a> {
    pub fn new(graph: &'a Graph, rule: Rule<'a>) -> Self {
        Engine { graph, rule, inert_exception: false, phantom: None, fixed: None }
    }

    pub fn with_inert_exception(mut self, on: bool) -> Self {
        self.inert_exception = on;
        self
    }

    fn fixed_state(&self, v: VertexId, t: u32) -> Option<u64> {
        let tr = self.fixed?.get(&v)?;
        tr.get(t as usize).or(tr.last()).copied()
    }

    /// Runs up to `max_rounds` rounds from `init`. With `stop_when_quiescent`
    /// the run ends at the first execution boundary where every known vertex
    /// is settled.
    pub fn run(&self, mut init: Vec<u64>, max_rounds: u32, stop_when_quiescent: bool, record: bool) -> Run {
        let g = self.graph;
        let n = g.n();
        let r = self.rule.rounds();
        let theta = self.rule.theta;
        assert_eq!(init.len(), n, "initial state vector has wrong length");
        assert!(
            !(self.inert_exception && (self.phantom.is_some() || self.fixed.is_some())),
            "inert certification needs exact degree bounds"
        );
        if let Some(fixed) = self.fixed {
            for &v in fixed.keys() {
                init[v as usize] = self.fixed_state(v, 0).unwrap_or(UNKNOWN);
            }
        }
        let mut cur = init;
        let phantom = |v: usize| self.phantom.map_or(0, |p| p[v]);
        let is_fixed = |v: VertexId| self.fixed.is_some_and(|f| f.contains_key(&v));

        let mut known_until = vec![0u32; n];
        let mut settled_at = vec![NEVER; n];
        let mut removed_at = vec![NEVER; n];
        let mut ub = vec![0u32; n];
        let mut unk = vec![0u32; n];
        for v in 0..n {
            let s = cur[v];
            if s != UNKNOWN {
                known_until[v] = 1;
            }
            if state::is_removed(s) {
                known_until[v] = FOREVER;
                settled_at[v] = 0;
                removed_at[v] = 0;
            }
            ub[v] = phantom(v);
            unk[v] = phantom(v);
            for &u in g.neighbors(v as VertexId) {
                let su = cur[u as usize];
                if !state::is_removed(su) {
                    ub[v] += 1;
                }
                if su == UNKNOWN {
                    unk[v] += 1;
                }
            }
        }
        let mut active: Vec<VertexId> =
            (0..n as VertexId).filter(|&v| state::is_alive(cur[v as usize]) && !is_fixed(v)).collect();
        let mut rows = record.then(|| vec![cur.clone()]);
        let mut t = 0u32;
        let mut quiescent = false;
        let mut changes: Vec<(VertexId, u64)> = Vec::new();
        loop {
            if t.is_multiple_of(r) {
                if self.inert_exception {
                    active.retain(|&v| {
                        let vi = v as usize;
                        let inert = cur[vi] == state::IDLE
                            && ub[vi] as u64 <= theta
                            && g.neighbors(v)
                                .iter()
                                .all(|&u| state::is_removed(cur[u as usize]) || ub[u as usize] as u64 <= theta);
                        if inert {
                            settled_at[vi] = t;
                            known_until[vi] = FOREVER;
                        }
                        !inert
                    });
                }
                if active.is_empty() {
                    quiescent = true;
                }
                if quiescent && stop_when_quiescent {
                    break;
                }
            }
            if t >= max_rounds {
                break;
            }
            let k = t / r;
            let q = t % r;
            if let Some(fixed) = self.fixed {
                for &v in fixed.keys() {
                    cur[v as usize] = self.fixed_state(v, t).unwrap_or(UNKNOWN);
                }
            }
            changes.clear();
            for &v in &active {
                let vi = v as usize;
                let next = if unk[vi] > 0 { UNKNOWN } else { self.rule.eval(q, k, v, g.neighbors(v), &cur) };
                if next != cur[vi] {
                    changes.push((v, next));
                }
            }
            t += 1;
            let mut dropped = false;
            for &(v, next) in &changes {
                let vi = v as usize;
                cur[vi] = next;
                if next == UNKNOWN {
                    known_until[vi] = t;
                    for &u in g.neighbors(v) {
                        unk[u as usize] += 1;
                    }
                    dropped = true;
                } else if state::is_removed(next) {
                    removed_at[vi] = t;
                    settled_at[vi] = t;
                    known_until[vi] = FOREVER;
                    for &u in g.neighbors(v) {
                        ub[u as usize] -= 1;
                    }
                    dropped = true;
                }
            }
            if dropped {
                active.retain(|&v| state::is_alive(cur[v as usize]));
            }
            if let Some(fixed) = self.fixed {
                for &v in fixed.keys() {
                    cur[v as usize] = self.fixed_state(v, t).unwrap_or(UNKNOWN);
                }
            }
            if let Some(rows) = rows.as_mut() {
                rows.push(cur.clone());
            }
        }
        for &v in &active {
            let vi = v as usize;
            if known_until[vi] != FOREVER && state::is_alive(cur[vi]) {
                known_until[vi] = t + 1;
            }
        }
        let definitely_high = active.iter().any(|&v| u64::from(ub[v as usize] - unk[v as usize]) > theta);
        Run { states: cur, known_until, settled_at, removed_at, rounds: t, quiescent, definitely_high, rows }
    }
}

/// Plain (fully known) simulation for `rounds` rounds, keeping every row.
pub fn simulate_plain(g: &Graph, rule: Rule<'_>, init: Vec<u64>, rounds: u32) -> Vec<Vec<u64>> {
    Engine::new(g, rule).run(init, rounds, false, true).rows.unwrap_or_default()
}

/// Algorithm A′: the initially pending vertices start unknown and the mark
/// spreads along every edge it would have carried a message on.
pub fn step_pending_local(g: &Graph, rule: Rule<'_>, states: &[u64], pending: &[bool], rounds: u32) -> Vec<u64> {
    let init = states.iter().zip(pending).map(|(&s, &p)| if p { UNKNOWN } else { s }).collect();
    Engine::new(g, rule).run(init, rounds, false, false).states
}

/// Sorted vertex set within distance `radius` of `src` in the subgraph
/// induced by `member`.
pub fn ball(g: &Graph, src: VertexId, radius: u32, member: &[bool]) -> Vec<VertexId> {
    let mut dist: BTreeMap<VertexId, u32> = BTreeMap::new();
    if !member[src as usize] {
        return Vec::new();
    }
    dist.insert(src, 0);
    let mut frontier = vec![src];
    for d in 1..=radius {
        let mut next = Vec::new();
        for &v in &frontier {
            for &u in g.neighbors(v) {
                if member[u as usize] && !dist.contains_key(&u) {
                    dist.insert(u, d);
                    next.push(u);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    dist.into_keys().collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LocalError {
    InsufficientRadius { rounds: u32, radius: u32 },
    Unresolved { owner: VertexId },
}

impl fmt::Display for LocalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocalError::InsufficientRadius { rounds, radius } => {
                write!(f, "{rounds} rounds requested from a store of radius {radius}")
            }
            LocalError::Unresolved { owner } => write!(f, "store does not determine the state of {owner}"),
        }
    }
}

/// The neighbourhood of one vertex collected by graph exponentiation: the
/// `radius`-ball in the graph without the eliminated set `U`, plus the
/// message transcripts of eliminated vertices adjacent to the ball.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodStore {
    pub owner: VertexId,
    pub radius: u32,
    pub vertices: Vec<VertexId>,
    pub edges: Vec<(VertexId, VertexId)>,
    /// Degree in `G[V∖U]` of every ball vertex.
    pub degree: BTreeMap<VertexId, u32>,
    pub initial: BTreeMap<VertexId, u64>,
    /// For every eliminated `u` adjacent to the ball: its states from round 0
    /// up to and including its elimination round.
    pub comm: BTreeMap<VertexId, Vec<u64>>,
    pub comm_edges: Vec<(VertexId, VertexId)>,
}

impl NeighborhoodStore {
    /// Collects the store of `owner` from a full run (`rows`) in which the
    /// vertices flagged in `eliminated` are removed.
    pub fn collect(
        g: &Graph,
        owner: VertexId,
        radius: u32,
        eliminated: &[bool],
        rows: &[Vec<u64>],
    ) -> NeighborhoodStore {
        let member: Vec<bool> = eliminated.iter().map(|&e| !e).collect();
        let vertices = ball(g, owner, radius, &member);
        let inside = |v: VertexId| vertices.binary_search(&v).is_ok();
        let mut edges = Vec::new();
        let mut degree = BTreeMap::new();
        let mut initial = BTreeMap::new();
        let mut comm = BTreeMap::new();
        let mut comm_edges = Vec::new();
        for &v in &vertices {
            let mut d = 0;
            for &u in g.neighbors(v) {
                if eliminated[u as usize] {
                    comm_edges.push((u, v));
                    comm.entry(u).or_insert_with(|| {
                        let end =
                            rows.iter().position(|row| state::is_removed(row[u as usize])).unwrap_or(rows.len() - 1);
                        rows[..=end].iter().map(|row| row[u as usize]).collect::<Vec<_>>()
                    });
                } else {
                    d += 1;
                    if v < u && inside(u) {
                        edges.push((v, u));
                    }
                }
            }
            degree.insert(v, d);
            initial.insert(v, rows[0][v as usize]);
        }
        NeighborhoodStore { owner, radius, vertices, edges, degree, initial, comm, comm_edges }
    }

    pub fn words(&self) -> u64 {
        (self.vertices.len() * 3 + self.edges.len() * 2 + self.comm_edges.len() * 2) as u64
            + self.comm.values().map(|t| t.len() as u64).sum::<u64>()
    }
}

/// Replays `rounds` rounds inside a store and returns the owner's state.
pub fn simulate_from_store(
    store: &NeighborhoodStore,
    n: usize,
    rule: Rule<'_>,
    rounds: u32,
) -> Result<u64, LocalError> {
    if rounds > store.radius {
        return Err(LocalError::InsufficientRadius { rounds, radius: store.radius });
    }
    let mut edges = store.edges.clone();
    edges.extend(store.comm_edges.iter().copied());
    let g = Graph::from_edges(n, &edges).expect("store edges form a simple graph");
    let mut phantom = vec![0u32; n];
    let mut init = vec![UNKNOWN; n];
    for &v in &store.vertices {
        let inner = g.neighbors(v).iter().filter(|u| !store.comm.contains_key(u)).count() as u32;
        phantom[v as usize] = store.degree[&v].saturating_sub(inner);
        init[v as usize] = store.initial[&v];
    }
    let engine = Engine { graph: &g, rule, inert_exception: false, phantom: Some(&phantom), fixed: Some(&store.comm) };
    let run = engine.run(init, rounds, false, false);
    match run.states[store.owner as usize] {
        UNKNOWN => Err(LocalError::Unresolved { owner: store.owner }),
        s => Ok(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_forest_union, gen_random_tree};
    use crate::tape::reduction_stream;
    use proptest::prelude::*;

    fn star(leaves: u32) -> Graph {
        let edges: Vec<_> = (1..=leaves).map(|l| (0, l)).collect();
        Graph::from_edges(leaves as usize + 1, &edges).unwrap()
    }

    fn idle(n: usize) -> Vec<u64> {
        vec![state::IDLE; n]
    }

    #[test]
    fn pack_round_trips() {
        let s = state::pack(Kind::Offer, 12345, 678);
        assert_eq!((state::kind(s), state::a(s), state::b(s)), (Kind::Offer, 12345, 678));
        assert_eq!(state::kind(UNKNOWN), Kind::Unknown);
        assert!(state::is_removed(state::matched(3)));
        assert!(!state::is_alive(UNKNOWN));
    }

    #[test]
    fn star_center_is_matched_when_high() {
        let tape = Tape::new(3);
        let g = star(65);
        let rule = Rule::reduction(Mode::Matching, 64, &tape, reduction_stream(1, 0));
        let rows = simulate_plain(&g, rule, idle(g.n()), R_LOCAL);
        let last = rows.last().unwrap();
        let removed: Vec<_> = (0..g.n()).filter(|&v| state::is_removed(last[v])).collect();
        assert_eq!(removed.len(), 2);
        assert_eq!(removed[0], 0);
        // K_{1,64}: the centre has degree exactly 64, which is not high.
        let g = star(64);
        let rows = simulate_plain(&g, rule, idle(g.n()), R_LOCAL);
        assert!(rows.last().unwrap().iter().all(|&s| s == state::IDLE));
    }

    #[test]
    fn no_high_vertex_means_nothing_happens() {
        let tape = Tape::new(1);
        let g = gen_random_tree(200, 4);
        for mode in [Mode::Matching, Mode::Mis] {
            let rule = Rule::reduction(mode, 1000, &tape, reduction_stream(1, 0));
            let rows = simulate_plain(&g, rule, idle(g.n()), 4 * R_LOCAL);
            assert!(rows
                .iter()
                .flatten()
                .all(|&s| s == state::IDLE || state::kind(s) == Kind::Offer || state::kind(s) == Kind::Commit));
            assert!(rows.last().unwrap().iter().all(|&s| s == state::IDLE));
        }
    }

    #[test]
    fn pending_path_example() {
        let tape = Tape::new(1);
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let rule = Rule::reduction(Mode::Mis, 0, &tape, reduction_stream(1, 0));
        let out = step_pending_local(&g, rule, &idle(3), &[true, false, false], 1);
        assert_eq!(out[1], UNKNOWN);
        assert_ne!(out[2], UNKNOWN);
    }

    #[test]
    fn no_pending_equals_plain() {
        let tape = Tape::new(5);
        let g = gen_forest_union(300, 3, 1.0, 2);
        let rule = Rule::reduction(Mode::Matching, 3, &tape, reduction_stream(1, 0));
        let plain = simulate_plain(&g, rule, idle(g.n()), 7);
        let out = step_pending_local(&g, rule, &idle(g.n()), &vec![false; g.n()], 7);
        assert_eq!(&out, plain.last().unwrap());
    }

    fn distances_from(g: &Graph, sources: &[VertexId]) -> Vec<u32> {
        let mut dist = vec![u32::MAX; g.n()];
        let mut queue = alloc::collections::VecDeque::new();
        for &s in sources {
            dist[s as usize] = 0;
            queue.push_back(s);
        }
        while let Some(v) = queue.pop_front() {
            for &u in g.neighbors(v) {
                if dist[u as usize] == u32::MAX {
                    dist[u as usize] = dist[v as usize] + 1;
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    #[test]
    fn pending_tree_matches_oracle_outside_pending_balls() {
        let tape = Tape::new(11);
        let g = gen_random_tree(500, 8);
        for mode in [Mode::Matching, Mode::Mis] {
            let rule = Rule::reduction(mode, 2, &tape, reduction_stream(1, 0));
            let pending: Vec<bool> = (0..500).map(|v| v % 37 == 5).collect();
            let sources: Vec<VertexId> = (0..500).filter(|&v| pending[v as usize]).collect();
            let dist = distances_from(&g, &sources);
            let plain = simulate_plain(&g, rule, idle(500), 3);
            let out = step_pending_local(&g, rule, &idle(500), &pending, 3);
            for v in 0..500 {
                if dist[v] > 3 {
                    assert_eq!(out[v], plain[3][v], "vertex {v}");
                }
                if out[v] != UNKNOWN {
                    assert_eq!(out[v], plain[3][v]);
                }
            }
        }
    }

    #[test]
    fn store_radius_checks() {
        let tape = Tape::new(2);
        let g = gen_random_tree(50, 1);
        let rule = Rule::reduction(Mode::Matching, 1, &tape, reduction_stream(1, 0));
        let rows = simulate_plain(&g, rule, idle(50), 4);
        let store = NeighborhoodStore::collect(&g, 7, 2, &[false; 50], &rows);
        assert_eq!(simulate_from_store(&store, 50, rule, 0).unwrap(), rows[0][7]);
        assert_eq!(
            simulate_from_store(&store, 50, rule, 3),
            Err(LocalError::InsufficientRadius { rounds: 3, radius: 2 })
        );
    }

    #[test]
    fn full_store_equals_whole_graph() {
        let tape = Tape::new(9);
        let g = gen_forest_union(120, 2, 1.0, 3);
        let rule = Rule::reduction(Mode::Mis, 2, &tape, reduction_stream(1, 0));
        let rows = simulate_plain(&g, rule, idle(120), 8);
        for v in [0u32, 17, 64, 119] {
            let store = NeighborhoodStore::collect(&g, v, 8, &[false; 120], &rows);
            assert_eq!(simulate_from_store(&store, 120, rule, 8).unwrap(), rows[8][v as usize]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn store_with_eliminated_set_matches_oracle(seed: u64, owner in 0u32..150) {
            let tape = Tape::new(seed);
            let g = gen_forest_union(150, 3, 1.0, seed);
            for mode in [Mode::Matching, Mode::Mis] {
                let rule = Rule::reduction(mode, 2, &tape, reduction_stream(1, 0));
                let rows = simulate_plain(&g, rule, idle(150), 8);
                // U: vertices eliminated within the first execution.
                let eliminated: Vec<bool> = (0..150).map(|v| state::is_removed(rows[4][v])).collect();
                if eliminated[owner as usize] {
                    continue;
                }
                let store = NeighborhoodStore::collect(&g, owner, 4, &eliminated, &rows);
                prop_assert_eq!(simulate_from_store(&store, 150, rule, 4).unwrap(), rows[4][owner as usize]);
            }
        }

        #[test]
        fn known_states_are_exact(seed: u64, density in 0.05f64..0.3) {
            let tape = Tape::new(seed);
            let g = gen_forest_union(200, 3, 1.0, seed ^ 1);
            let pending: Vec<bool> = (0..200).map(|v| tape.unit(77, v) < density).collect();
            for mode in [Mode::Matching, Mode::Mis] {
                let rule = Rule::reduction(mode, 3, &tape, reduction_stream(2, 0));
                let full = Engine::new(&g, rule).run(idle(200), 40, false, true);
                let init: Vec<u64> = pending.iter().map(|&p| if p { UNKNOWN } else { state::IDLE }).collect();
                let part = Engine::new(&g, rule).with_inert_exception(true).run(init, 40, false, false);
                for v in 0..200 {
                    let s = part.states[v];
                    if s != UNKNOWN {
                        prop_assert_eq!(s, full.states[v]);
                    }
                    // Known prefixes agree with the full table.
                    let k = part.known_until[v];
                    if k != FOREVER && k > 0 {
                        prop_assert!(k as usize <= full.rows.as_ref().unwrap().len());
                    }
                }
            }
        }
    }
}
