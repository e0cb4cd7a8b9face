//! Pipelined maximal matching / MIS for bounded-arboricity graphs.
//!
//! Phases `ℓ = 1..L` each run the degree-reduction step until no vertex has
//! degree above `Δ_ℓ = Δ^{1/2^ℓ}`. The unpipelined driver runs them one after
//! another. The pipelined driver starts phase `ℓ` at iteration `(ℓ−1)·t + 1`
//! and lets it work on whatever part of phase `ℓ−1`'s outcome is already
//! known; everything else is pending. Both feed the same finisher, and both
//! produce the same solution for the same seed.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::graph::{Graph, VertexId};
use crate::local::{self, state, Engine, Rule, Run, NEVER, R_LOCAL};
use crate::mpc::{ceil_guarded, ceil_log2, floor_guarded, Allocation, Cluster, MpcError, RoundLedger, SimConfig};
use crate::tape::{reduction_stream, stream, Tape};

pub use crate::local::Mode;

const GRAPH_TAG: u64 = 1;
const STORE_TAG: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PipelineError {
    Mpc(MpcError),
    PhaseStall { phase: u32, executions: u64 },
    NonConvergence { rounds: u64 },
    DegreeTooLarge { max_degree: usize, capacity: u64 },
}

impl From<MpcError> for PipelineError {
    fn from(e: MpcError) -> Self {
        PipelineError::Mpc(e)
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::Mpc(e) => write!(f, "{e}"),
            PipelineError::PhaseStall { phase, executions } => {
                write!(f, "phase {phase} still has high-degree vertices after {executions} executions")
            }
            PipelineError::NonConvergence { rounds } => write!(f, "finisher did not converge in {rounds} rounds"),
            PipelineError::DegreeTooLarge { max_degree, capacity } => {
                write!(f, "max degree {max_degree} is not below the machine capacity {capacity}")
            }
        }
    }
}

/// A matching or an independent set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub mode: Mode,
    pub matched_edges: BTreeSet<(VertexId, VertexId)>,
    pub independent_set: BTreeSet<VertexId>,
}

impl Solution {
    pub fn empty(mode: Mode) -> Self {
        Solution { mode, matched_edges: BTreeSet::new(), independent_set: BTreeSet::new() }
    }

    pub fn from_states(mode: Mode, states: &[u64]) -> Self {
        let mut sol = Solution::empty(mode);
        for (v, &s) in states.iter().enumerate() {
            let v = v as VertexId;
            match state::kind(s) {
                state::Kind::Matched => {
                    let p = state::a(s);
                    sol.matched_edges.insert((v.min(p), v.max(p)));
                }
                state::Kind::InIs => {
                    sol.independent_set.insert(v);
                }
                _ => {}
            }
        }
        sol
    }

    pub fn len(&self) -> usize {
        match self.mode {
            Mode::Matching => self.matched_edges.len(),
            Mode::Mis => self.independent_set.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePlan {
    pub ell: u32,
    pub delta_prev: f64,
    pub delta_cur: f64,
    /// Integer threshold: a vertex is high when its degree exceeds it.
    pub theta: u64,
    /// `⌈log_{Δ_ℓ} n⌉ + 2`.
    pub cap: u64,
    pub skipped: bool,
}

impl PhasePlan {
    pub fn max_executions(&self) -> u64 {
        4 * self.cap
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub delta: usize,
    pub threshold: u64,
    pub big_l: u32,
    pub phases: Vec<PhasePlan>,
}

/// Smallest `k` with every subgraph having a vertex of degree `≤ k`. An
/// upper bound for `2α − 1`, and so for the arboricity.
pub fn degeneracy(g: &Graph) -> u32 {
    let n = g.n();
    let mut deg: Vec<usize> = (0..n).map(|v| g.degree(v as VertexId)).collect();
    let maxd = deg.iter().copied().max().unwrap_or(0);
    let mut buckets: Vec<Vec<VertexId>> = vec![Vec::new(); maxd + 1];
    for v in 0..n {
        buckets[deg[v]].push(v as VertexId);
    }
    let mut gone = vec![false; n];
    let mut best = 0;
    let mut d: usize = 0;
    for _ in 0..n {
        d = d.saturating_sub(1);
        let v = loop {
            while buckets[d].is_empty() {
                d += 1;
            }
            let v = buckets[d].pop().unwrap();
            if !gone[v as usize] && deg[v as usize] == d {
                break v;
            }
        };
        gone[v as usize] = true;
        best = best.max(d);
        for &u in g.neighbors(v) {
            let ui = u as usize;
            if !gone[ui] {
                deg[ui] -= 1;
                buckets[deg[ui]].push(u);
            }
        }
    }
    best as u32
}

/// The phase schedule for a graph with max degree `delta` and arboricity
/// bound `alpha`.
pub fn schedule(n: usize, delta: usize, alpha: u32, cfg: &SimConfig) -> Schedule {
    let lg = ceil_log2(n as u64).max(1);
    let threshold = cfg.low_degree_threshold.unwrap_or((u64::from(alpha) * u64::from(alpha)).max(lg * lg)).max(2);
    let big_l = if delta as u64 > threshold {
        let ratio = libm::log(delta as f64) / libm::log(threshold as f64);
        ceil_guarded(libm::log2(ratio)).max(1) as u32
    } else {
        0
    };
    let phases = (1..=big_l)
        .map(|ell| {
            let delta_prev = libm::pow(delta as f64, 1.0 / libm::pow(2.0, f64::from(ell - 1)));
            let delta_cur = libm::sqrt(delta_prev);
            let theta = floor_guarded(delta_cur).max(1);
            let cap = ceil_guarded(libm::log((n as f64).max(2.0)) / libm::log(delta_cur.max(1.5))) + 2;
            PhasePlan { ell, delta_prev, delta_cur, theta, cap, skipped: delta_prev < 4.0 }
        })
        .collect();
    Schedule { delta, threshold, big_l, phases }
}

/// One trace record per (iteration, phase).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub j: u32,
    pub ell: u32,
    pub h_size: u64,
    pub h_plus_size: u64,
    pub store_words_total: u64,
    pub max_store_words: u64,
    pub pending_count: u64,
    pub removed_count: u64,
}

/// What the finished-executions and store-radius audit needs about one
/// (iteration, phase).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub j: u32,
    pub ell: u32,
    pub i: u32,
    /// `s·d_i`: executions every far-from-pending vertex must have finished.
    pub required: u64,
    /// `s·d_i·r`: the distance that counts as far.
    pub reach: u64,
    /// `H⁺_ℓ(j−1)`, sorted.
    pub h_plus_prev: Vec<VertexId>,
    /// `H⁺_{ℓ−1}(j−1)`, sorted; empty for the first phase.
    pub h_plus_prev_lower: Vec<VertexId>,
    /// Finished executions of each vertex of `h_plus_prev` (parallel).
    pub finished: Vec<u64>,
    /// Store radius `d_i`.
    pub radius: u32,
    /// `H⁺_ℓ(j)`, sorted.
    pub h_plus: Vec<VertexId>,
    /// Vertices of `G(j)`.
    pub alive: Vec<bool>,
    /// Vertices of `G(j−1)`.
    pub alive_prev: Vec<bool>,
    pub stores: Vec<StoreSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreSnapshot {
    pub owner: VertexId,
    pub vertices: Vec<VertexId>,
    pub words: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub snapshots: Option<Vec<Snapshot>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub record_snapshots: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub solution: Solution,
    pub ledger: RoundLedger,
    pub trace: Trace,
    pub schedule: Schedule,
    pub iterations: u32,
    pub finisher_rounds: u64,
}

fn alpha_of(g: &Graph) -> u32 {
    g.alpha_hint().unwrap_or_else(|| degeneracy(g).max(1))
}

fn prepare(g: &Graph, cfg: &SimConfig) -> Result<(Cluster, Schedule), PipelineError> {
    let delta = g.max_degree();
    if delta as u64 >= cfg.capacity {
        return Err(PipelineError::DegreeTooLarge { max_degree: delta, capacity: cfg.capacity });
    }
    let mut cluster = Cluster::new(cfg.clone());
    let words = (g.n() + 2 * g.m()) as u64;
    // The graph itself stays resident for the whole run.
    cluster.place_spread(GRAPH_TAG, words)?;
    Ok((cluster, schedule(g.n(), delta, alpha_of(g), cfg)))
}

fn phase_rule<'t>(mode: Mode, plan: &PhasePlan, tape: &'t Tape) -> Rule<'t> {
    Rule::reduction(mode, plan.theta, tape, reduction_stream(plan.ell, 0))
}

/// One execution (`R_LOCAL` rounds) of the reference degree-reduction step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub states: Vec<u64>,
    pub removed: Vec<VertexId>,
    /// `rows[t]`: states after `t` rounds.
    pub transcript: Vec<Vec<u64>>,
}

/// Runs the reference step once on `g` from `states`: vertices of degree
/// above `theta` propose (matching) or mark (MIS).
pub fn reduction_step(g: &Graph, theta: u64, mode: Mode, tape: &Tape, family: u64, states: &[u64]) -> StepOutcome {
    let rule = Rule::reduction(mode, theta, tape, family);
    let transcript = local::simulate_plain(g, rule, states.to_vec(), R_LOCAL);
    let last = transcript.last().cloned().unwrap_or_default();
    let removed = (0..g.n())
        .filter(|&v| state::is_removed(last[v]) && !state::is_removed(states[v]))
        .map(|v| v as VertexId)
        .collect();
    StepOutcome { states: last, removed, transcript }
}

/// Vertices of degree above `theta` among alive vertices.
pub fn high_set(g: &Graph, alive: &[bool], theta: u64) -> Vec<VertexId> {
    (0..g.n() as VertexId).filter(|&v| alive[v as usize] && alive_degree(g, alive, v) as u64 > theta).collect()
}

fn alive_degree(g: &Graph, alive: &[bool], v: VertexId) -> usize {
    g.neighbors(v).iter().filter(|&&u| alive[u as usize]).count()
}

/// Vertices within `radius` hops of `sources` in the graph induced by `alive`.
pub fn neighborhood(g: &Graph, alive: &[bool], sources: &[VertexId], radius: u32) -> Vec<bool> {
    let mut dist = vec![u32::MAX; g.n()];
    let mut queue = VecDeque::new();
    for &s in sources {
        if alive[s as usize] && dist[s as usize] == u32::MAX {
            dist[s as usize] = 0;
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        let d = dist[v as usize];
        if d == radius {
            continue;
        }
        for &u in g.neighbors(v) {
            if alive[u as usize] && dist[u as usize] == u32::MAX {
                dist[u as usize] = d + 1;
                queue.push_back(u);
            }
        }
    }
    dist.into_iter().map(|d| d != u32::MAX).collect()
}

fn members(mask: &[bool]) -> Vec<VertexId> {
    (0..mask.len() as VertexId).filter(|&v| mask[v as usize]).collect()
}

/// Finishes a low-degree residual graph with Luby-style rounds, updating
/// `states` in place. Returns the LOCAL rounds used (one MPC round each).
pub fn finish_low_degree(
    g: &Graph,
    states: &mut Vec<u64>,
    mode: Mode,
    tape: &Tape,
    cluster: &mut Cluster,
) -> Result<u64, PipelineError> {
    let n = g.n();
    let limit = 64 * ceil_log2(n as u64).max(1);
    let mut rounds = 0u64;
    let traffic = (g.max_degree() as u64).min(cluster.capacity());
    for k in 0u32.. {
        let done = match mode {
            Mode::Matching => (0..n).all(|v| {
                !state::is_alive(states[v])
                    || g.neighbors(v as VertexId).iter().all(|&u| !state::is_alive(states[u as usize]))
            }),
            Mode::Mis => states.iter().all(|&s| !state::is_alive(s)),
        };
        if done {
            break;
        }
        if rounds >= limit {
            return Err(PipelineError::NonConvergence { rounds });
        }
        let rule = Rule::finisher(mode, tape, stream::FINISHER | u64::from(k));
        let r = rule.rounds();
        let run = Engine::new(g, rule).run(core::mem::take(states), r, false, false);
        *states = run.states;
        rounds += u64::from(r);
        cluster.charge("finish", u64::from(r), traffic, traffic)?;
    }
    Ok(rounds)
}

/// Original Luby MIS (mark with probability `1/(2d)`, higher degree wins
/// conflicts). Returns the independent set and the LOCAL rounds used.
pub fn luby_baseline(g: &Graph, seed: u64) -> (BTreeSet<VertexId>, u64) {
    let n = g.n();
    let tape = Tape::new(seed);
    let mut alive = vec![true; n];
    let mut in_set = BTreeSet::new();
    let mut rounds = 0u64;
    let mut iter = 0u64;
    while alive.iter().any(|&a| a) {
        let s = stream::BASELINE | iter;
        let deg: Vec<usize> =
            (0..n).map(|v| if alive[v] { alive_degree(g, &alive, v as VertexId) } else { 0 }).collect();
        let marked: Vec<bool> =
            (0..n).map(|v| alive[v] && (deg[v] == 0 || tape.unit(s, v as u64) * 2.0 * (deg[v] as f64) < 1.0)).collect();
        let joins: Vec<VertexId> = (0..n as VertexId)
            .filter(|&v| {
                marked[v as usize]
                    && g.neighbors(v)
                        .iter()
                        .all(|&u| !marked[u as usize] || (deg[u as usize], u) < (deg[v as usize], v))
            })
            .collect();
        for &v in &joins {
            in_set.insert(v);
            alive[v as usize] = false;
        }
        for &v in &joins {
            for &u in g.neighbors(v) {
                alive[u as usize] = false;
            }
        }
        rounds += 3;
        iter += 1;
    }
    (in_set, rounds)
}

/// Sequential phases, then the finisher.
pub fn run_unpipelined(g: &Graph, mode: Mode, cfg: &SimConfig, opts: RunOptions) -> Result<RunOutput, PipelineError> {
    let (mut cluster, sched) = prepare(g, cfg)?;
    let tape = Tape::new(cfg.seed);
    let mut states = vec![state::IDLE; g.n()];
    let mut trace = Trace { records: Vec::new(), snapshots: opts.record_snapshots.then(Vec::new) };
    let traffic = sched.delta as u64;
    for (idx, plan) in sched.phases.iter().enumerate() {
        if plan.skipped {
            continue;
        }
        let rule = phase_rule(mode, plan, &tape);
        let alive: Vec<bool> = states.iter().map(|&s| state::is_alive(s)).collect();
        let h = high_set(g, &alive, plan.theta);
        let h_plus = neighborhood(g, &alive, &h, R_LOCAL);
        let max_rounds = (plan.max_executions() * u64::from(R_LOCAL)) as u32;
        let run = Engine::new(g, rule).with_inert_exception(true).run(states, max_rounds, true, false);
        let executions = u64::from(run.rounds / R_LOCAL);
        if !run.quiescent {
            return Err(PipelineError::PhaseStall { phase: plan.ell, executions });
        }
        for _ in 0..executions {
            cluster.charge("phase:local", u64::from(R_LOCAL), traffic, traffic)?;
            cluster.charge("phase:update", 1, traffic, traffic)?;
        }
        let removed = run.removed_at.iter().filter(|&&r| r != NEVER && r > 0).count() as u64;
        trace.records.push(TraceRecord {
            j: idx as u32 + 1,
            ell: plan.ell,
            h_size: h.len() as u64,
            h_plus_size: h_plus.iter().filter(|&&b| b).count() as u64,
            store_words_total: 0,
            max_store_words: 0,
            pending_count: 0,
            removed_count: removed,
        });
        states = run.states;
    }
    let finisher_rounds = finish_low_degree(g, &mut states, mode, &tape, &mut cluster)?;
    Ok(RunOutput {
        solution: Solution::from_states(mode, &states),
        ledger: cluster.into_ledger(),
        trace,
        iterations: sched.phases.len() as u32,
        finisher_rounds,
        schedule: sched,
    })
}

struct PhaseTrack {
    plan: PhasePlan,
    start: u32,
    complete: bool,
    /// Settled outcome of this phase, `UNKNOWN` where not yet known.
    outcome: Vec<u64>,
    run: Option<Run>,
    prev_rounds: u32,
    alloc: Allocation,
    stores: BTreeMap<VertexId, Vec<VertexId>>,
    store_words: BTreeMap<VertexId, u64>,
    h_plus: Vec<bool>,
}

/// Store contents for `owner`: the `radius`-ball in `G[H⁺]`, computed from
/// the previous stores when they exist (union, then BFS restricted to it).
fn expand_store(
    g: &Graph,
    owner: VertexId,
    radius: u32,
    h_plus: &[bool],
    previous: &BTreeMap<VertexId, Vec<VertexId>>,
    capacity: u64,
) -> Result<Vec<VertexId>, MpcError> {
    let pool: Option<BTreeSet<VertexId>> = previous.get(&owner).map(|old| {
        old.iter()
            .filter(|&&u| h_plus[u as usize])
            .flat_map(|u| previous.get(u).into_iter().flatten().copied())
            .filter(|&w| h_plus[w as usize])
            .collect()
    });
    let allowed = |v: VertexId| h_plus[v as usize] && pool.as_ref().is_none_or(|p| p.contains(&v));
    let mut dist: BTreeMap<VertexId, u32> = BTreeMap::from([(owner, 0)]);
    let mut queue = VecDeque::from([owner]);
    let mut words = 1u64;
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        if d == radius {
            continue;
        }
        for &u in g.neighbors(v) {
            if allowed(u) && !dist.contains_key(&u) {
                dist.insert(u, d + 1);
                queue.push_back(u);
                words += 3;
                if words > capacity {
                    return Err(MpcError::CapacityExceeded {
                        machine: u64::from(owner),
                        direction: crate::mpc::Direction::Resident,
                        words,
                        capacity,
                    });
                }
            }
        }
    }
    Ok(dist.into_keys().collect())
}

/// Phases overlap: phase `ℓ` starts at iteration `(ℓ−1)·t + 1` and in every
/// iteration extends its pending-aware simulation as far as the currently
/// known outcome of phase `ℓ−1` allows.
pub fn run_pipelined(g: &Graph, mode: Mode, cfg: &SimConfig, opts: RunOptions) -> Result<RunOutput, PipelineError> {
    let (mut cluster, sched) = prepare(g, cfg)?;
    let tape = Tape::new(cfg.seed);
    let n = g.n();
    let r = R_LOCAL;
    let s = u64::from(cfg.s_param);
    let t_lag = cfg.lag_t;
    let capacity = cfg.capacity;
    let mut trace = Trace { records: Vec::new(), snapshots: opts.record_snapshots.then(Vec::new) };
    let mut tracks: Vec<PhaseTrack> = sched
        .phases
        .iter()
        .enumerate()
        .map(|(idx, plan)| PhaseTrack {
            plan: plan.clone(),
            start: idx as u32 * t_lag + 1,
            complete: false,
            outcome: vec![state::UNKNOWN; n],
            run: None,
            prev_rounds: 0,
            alloc: Allocation::default(),
            stores: BTreeMap::new(),
            store_words: BTreeMap::new(),
            h_plus: vec![false; n],
        })
        .collect();
    let iteration_limit = sched.phases.len() as u32 * t_lag + 64;
    let mut alive_prev = vec![true; n];
    let mut j = 0u32;
    while tracks.iter().any(|tr| !tr.complete) {
        j += 1;
        if j > iteration_limit {
            return Err(PipelineError::NonConvergence { rounds: cluster.rounds() });
        }
        // Knowledge at the end of iteration j−1.
        let inputs: Vec<Vec<u64>> = (0..tracks.len())
            .map(|idx| if idx == 0 { vec![state::IDLE; n] } else { tracks[idx - 1].outcome.clone() })
            .collect();
        let prev_h_plus: Vec<Vec<bool>> = tracks.iter().map(|tr| tr.h_plus.clone()).collect();
        let mut sim_charge = 0u64;
        let mut progress: Vec<Option<(u32, u64)>> = vec![None; tracks.len()];
        for (idx, tr) in tracks.iter_mut().enumerate() {
            if tr.start > j || tr.complete {
                continue;
            }
            let i = j - tr.start + 1;
            let required = s * (1u64 << i.min(40)) * u64::from(r);
            progress[idx] = Some((i, required));
            if tr.plan.skipped {
                tr.outcome = inputs[idx].clone();
                tr.complete = tr.outcome.iter().all(|&x| x != state::UNKNOWN);
                continue;
            }
            let max_exec = tr.plan.max_executions();
            let horizon = required.min(max_exec);
            let rule = phase_rule(mode, &tr.plan, &tape);
            let run = Engine::new(g, rule).with_inert_exception(true).run(
                inputs[idx].clone(),
                (horizon * u64::from(r)) as u32,
                true,
                false,
            );
            if !run.quiescent && u64::from(run.rounds) >= max_exec * u64::from(r) && run.definitely_high {
                return Err(PipelineError::PhaseStall { phase: tr.plan.ell, executions: max_exec });
            }
            for v in 0..n {
                if run.settled_at[v] != NEVER {
                    tr.outcome[v] = run.states[v];
                }
            }
            tr.complete = tr.outcome.iter().all(|&x| x != state::UNKNOWN);
            let new_rounds = u64::from(run.rounds.saturating_sub(tr.prev_rounds));
            tr.prev_rounds = tr.prev_rounds.max(run.rounds);
            // Chunks of d_{i−1} rounds; the initial simulation uses the 2r-radius stores.
            let chunk = if i == 1 { 2 * u64::from(r) } else { u64::from(r) << (i - 1).min(40) };
            sim_charge = sim_charge.max(2 * new_rounds.div_ceil(chunk));
            tr.run = Some(run);
        }

        // Update: G(j) drops every vertex known to be removed in any phase.
        let mut alive = vec![true; n];
        for tr in &tracks {
            for (a, &o) in alive.iter_mut().zip(&tr.outcome) {
                if state::is_removed(o) {
                    *a = false;
                }
            }
        }
        // Expand: stores of radius d_i around H⁺_ℓ(j).
        let mut max_store = 0u64;
        let mut expand_needed = false;
        for idx in 0..tracks.len() {
            let lookahead = tracks[idx].start <= j + 1;
            let tr = &mut tracks[idx];
            cluster.release(core::mem::take(&mut tr.alloc));
            if tr.complete || !lookahead || tr.plan.skipped {
                tr.h_plus = vec![false; n];
                tr.stores.clear();
                tr.store_words.clear();
                continue;
            }
            let h = high_set(g, &alive, tr.plan.theta);
            tr.h_plus = neighborhood(g, &alive, &h, r);
            let Some((i, _)) = progress[idx] else {
                tr.stores.clear();
                tr.store_words.clear();
                continue;
            };
            let radius = r << i.min(20);
            let owners = members(&tr.h_plus);
            let mut stores = BTreeMap::new();
            let mut words_of = BTreeMap::new();
            let mut placed = Allocation::default();
            for &v in &owners {
                let ball = match expand_store(g, v, radius, &tr.h_plus, &tr.stores, capacity) {
                    Ok(ball) => ball,
                    Err(e) => {
                        cluster.release(placed);
                        return Err(e.into());
                    }
                };
                let edges: usize = ball
                    .iter()
                    .map(|&w| g.neighbors(w).iter().filter(|&&u| ball.binary_search(&u).is_ok()).count())
                    .sum();
                let comm: u64 = tr.run.as_ref().map_or(0, |run| {
                    ball.iter()
                        .flat_map(|&w| g.neighbors(w).iter())
                        .filter(|&&u| !tr.h_plus[u as usize])
                        .map(|&u| run.removed_at[u as usize])
                        .filter(|&at| at != NEVER && at > 0)
                        .map(u64::from)
                        .sum()
                });
                let words = ball.len() as u64 + edges as u64 + comm;
                max_store = max_store.max(words);
                match cluster.place(STORE_TAG, words) {
                    Ok(rec) => placed.records.push(rec),
                    Err(e) => {
                        cluster.release(placed);
                        return Err(e.into());
                    }
                }
                stores.insert(v, ball);
                words_of.insert(v, words);
            }
            tr.store_words = words_of;
            expand_needed |= !owners.is_empty();
            tr.alloc = placed;
            tr.stores = stores;
        }
        let traffic = max_store.max(sched.delta as u64).min(capacity);
        if sim_charge > 0 {
            cluster.charge("iter:simulate", sim_charge, traffic, traffic)?;
        }
        let sort = u64::from(cfg.round_charge_sort);
        cluster.charge("iter:update", sort, sched.delta as u64, sched.delta as u64)?;
        if expand_needed {
            cluster.charge("iter:expand", 1, traffic, traffic)?;
        }

        for (idx, tr) in tracks.iter().enumerate() {
            let Some((i, required)) = progress[idx] else { continue };
            let run = tr.run.as_ref();
            let pending = run.map_or(0, |run| run.states.iter().filter(|&&x| x == state::UNKNOWN).count() as u64);
            let removed =
                run.map_or(0, |run| run.removed_at.iter().filter(|&&at| at != NEVER && at > 0).count() as u64);
            let store_words: Vec<u64> = tr.store_words.values().copied().collect();
            trace.records.push(TraceRecord {
                j,
                ell: tr.plan.ell,
                h_size: high_set(g, &alive, tr.plan.theta).len() as u64,
                h_plus_size: tr.h_plus.iter().filter(|&&b| b).count() as u64,
                store_words_total: store_words.iter().sum(),
                max_store_words: store_words.iter().copied().max().unwrap_or(0),
                pending_count: pending,
                removed_count: removed,
            });
            if let Some(snaps) = trace.snapshots.as_mut() {
                let h_plus_prev = members(&prev_h_plus[idx]);
                let full_rounds = tr.plan.max_executions() as u32 * r;
                let finished = h_plus_prev
                    .iter()
                    .map(|&v| match run {
                        None => required,
                        Some(run) if run.known_until[v as usize] > full_rounds => required,
                        Some(run) => run.finished_executions(v, r, required),
                    })
                    .collect();
                snaps.push(Snapshot {
                    j,
                    ell: tr.plan.ell,
                    i,
                    required,
                    reach: required * u64::from(r),
                    h_plus_prev,
                    h_plus_prev_lower: if idx == 0 { Vec::new() } else { members(&prev_h_plus[idx - 1]) },
                    finished,
                    radius: r << i.min(20),
                    h_plus: members(&tr.h_plus),
                    alive: alive.clone(),
                    alive_prev: alive_prev.clone(),
                    stores: tr
                        .stores
                        .iter()
                        .map(|(&owner, b)| StoreSnapshot { owner, vertices: b.clone(), words: tr.store_words[&owner] })
                        .collect(),
                });
            }
        }
        alive_prev = alive;
    }
    let mut states = match tracks.last() {
        Some(tr) => tr.outcome.clone(),
        None => vec![state::IDLE; n],
    };
    let finisher_rounds = finish_low_degree(g, &mut states, mode, &tape, &mut cluster)?;
    Ok(RunOutput {
        solution: Solution::from_states(mode, &states),
        ledger: cluster.into_ledger(),
        trace,
        iterations: j,
        finisher_rounds,
        schedule: sched,
    })
}
