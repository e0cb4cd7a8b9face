//! 4-coloring of trees: peel low-degree layers, 2-color what is left by
//! depth parity on two random halves, then color the layers back in.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::graph::{Dsu, Graph, VertexId};
use crate::mpc::{
    ceil_guarded, ceil_log2, Allocation, BroadcastRequest, Cluster, KeyPart, KeyedItem, MachineId, MpcError,
};
use crate::tape::{stream, Tape};

const NONE: VertexId = VertexId::MAX;
const TREE_TAG: u64 = 3;
const ROOTING_TAG: u64 = 4;
const DEPTH_TAG: u64 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeColorError {
    NotAForest { edges: usize, bound: usize },
    DiameterExceeded { bound: u64, rounds: u64 },
    RootingIncomplete { orphans: Vec<VertexId> },
    DepthOverflow { vertex: VertexId, cap: usize },
    ScheduleConflict { u: VertexId, v: VertexId },
    DegreeTooLarge { max_degree: usize, capacity: u64 },
    RetriesExhausted { attempts: u32, last: Box<TreeColorError> },
    Mpc(MpcError),
}

impl From<MpcError> for TreeColorError {
    fn from(e: MpcError) -> Self {
        TreeColorError::Mpc(e)
    }
}

impl fmt::Display for TreeColorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeColorError::NotAForest { edges, bound } => {
                write!(f, "not a forest: {edges} edges but a forest on these vertices has at most {bound}")
            }
            TreeColorError::DiameterExceeded { bound, rounds } => {
                write!(f, "component labels did not settle in {rounds} rounds (diameter bound {bound})")
            }
            TreeColorError::RootingIncomplete { orphans } => {
                write!(f, "{} vertices never learned a parent", orphans.len())
            }
            TreeColorError::DepthOverflow { vertex, cap } => {
                write!(f, "ancestor list of vertex {vertex} grew past {cap}")
            }
            TreeColorError::ScheduleConflict { u, v } => {
                write!(f, "adjacent vertices {u} and {v} share a schedule class")
            }
            TreeColorError::DegreeTooLarge { max_degree, capacity } => {
                write!(f, "max degree {max_degree} is not below the machine capacity {capacity}")
            }
            TreeColorError::RetriesExhausted { attempts, last } => {
                write!(f, "gave up after {attempts} attempts: {last}")
            }
            TreeColorError::Mpc(e) => write!(f, "{e}"),
        }
    }
}

fn log2_real(n: usize) -> f64 {
    libm::log2(n.max(1) as f64)
}

/// `N = ⌈2·log_{3/2} log₂ n⌉`, at least 1 once there is an edge to peel.
pub fn peel_iterations(n: usize) -> u32 {
    let lg = log2_real(n);
    if n < 2 {
        return 0;
    }
    (ceil_guarded(2.0 * libm::log(lg) / libm::log(1.5)) as u32).max(1)
}

/// `n / log₂² n`, the residual size the peeling aims for.
pub fn residual_target(n: usize) -> f64 {
    let lg = log2_real(n);
    n as f64 / (lg * lg)
}

/// `D = ⌈30·ln n⌉`.
pub fn diameter_bound(n: usize) -> u64 {
    ceil_guarded(30.0 * libm::log(n.max(2) as f64))
}

/// `T = ⌈4·log₂² n⌉`.
pub fn rooting_trials(n: usize) -> u64 {
    let lg = log2_real(n);
    ceil_guarded(4.0 * lg * lg).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeelLayers {
    /// `W_1..W_N`, each sorted.
    pub layers: Vec<Vec<VertexId>>,
    pub residual: Vec<VertexId>,
    /// Per iteration: `(|V_current|, #vertices of degree ≥ 3)`.
    pub sizes: Vec<(usize, usize)>,
}

/// Fails with `NotAForest` when `g` has a cycle.
pub fn check_forest(g: &Graph) -> Result<(), TreeColorError> {
    let mut dsu = Dsu::new(g.n());
    let components = g.n() - g.edges().iter().filter(|&&(u, v)| dsu.union(u as usize, v as usize)).count();
    let bound = g.n() - components;
    if g.m() > bound {
        return Err(TreeColorError::NotAForest { edges: g.m(), bound });
    }
    Ok(())
}

/// `N` rounds of removing every vertex with at most two remaining neighbours.
pub fn peel(g: &Graph) -> Result<PeelLayers, TreeColorError> {
    peel_for(g, peel_iterations(g.n()))
}

/// [`peel`] with an explicit iteration count.
pub fn peel_for(g: &Graph, iterations: u32) -> Result<PeelLayers, TreeColorError> {
    check_forest(g)?;
    let n = g.n();
    let mut alive = vec![true; n];
    let mut deg: Vec<usize> = (0..n).map(|v| g.degree(v as VertexId)).collect();
    let mut current: Vec<VertexId> = (0..n as VertexId).collect();
    let mut layers = Vec::new();
    let mut sizes = Vec::new();
    for _ in 0..iterations {
        let high = current.iter().filter(|&&v| deg[v as usize] >= 3).count();
        sizes.push((current.len(), high));
        let (layer, rest): (Vec<VertexId>, Vec<VertexId>) = current.iter().partition(|&&v| deg[v as usize] <= 2);
        for &v in &layer {
            alive[v as usize] = false;
        }
        for &v in &layer {
            for &u in g.neighbors(v) {
                if alive[u as usize] {
                    deg[u as usize] -= 1;
                }
            }
        }
        layers.push(layer);
        current = rest;
    }
    Ok(PeelLayers { layers, residual: current, sizes })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Partition {
    pub v1: Vec<VertexId>,
    pub v2: Vec<VertexId>,
}

/// A vertex goes to `V2` exactly when `coin(v)` is true.
pub fn partition_with(residual: &[VertexId], coin: impl Fn(VertexId) -> bool) -> Partition {
    let (v2, v1) = residual.iter().partition(|&&v| coin(v));
    Partition { v1, v2 }
}

/// One fair coin per vertex from the partition stream of `attempt`.
pub fn random_partition(residual: &[VertexId], tape: &Tape, attempt: u32) -> Partition {
    let s = stream::PARTITION | u64::from(attempt);
    partition_with(residual, |v| tape.coin(s, u64::from(v)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabeling {
    /// Minimum vertex id of the component, `VertexId::MAX` outside `keep`.
    pub label: Vec<VertexId>,
    /// Rounds until the labels stopped changing, including the final check.
    pub rounds_used: u64,
    /// `⌈log₂ D⌉ + ⌈log₂ log₂ n⌉`, at least 1.
    pub rounds_charged: u64,
}

impl ComponentLabeling {
    /// Members of each component, keyed by label; each list is sorted.
    pub fn components(&self) -> BTreeMap<VertexId, Vec<VertexId>> {
        let mut out: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
        for (v, &l) in self.label.iter().enumerate() {
            if l != NONE {
                out.entry(l).or_default().push(v as VertexId);
            }
        }
        out
    }
}

pub fn cc_round_budget(n: usize, diameter: u64) -> u64 {
    (ceil_log2(diameter.max(1)) + ceil_log2(ceil_log2(n as u64).max(1))).max(1)
}

/// Labels `g[keep]` (a forest) by reach-set doubling: every vertex starts
/// from its closed neighbourhood and each round replaces its set by the
/// union of the sets of its members, so the radius doubles. A vertex's
/// label is the minimum of its set. After `⌈log₂ diam⌉` rounds every set is
/// its whole component, and one more round sees nothing change; the
/// simulation computes that count from the component diameter directly.
pub fn connected_components(g: &Graph, keep: &[bool], diameter: u64) -> Result<ComponentLabeling, TreeColorError> {
    let n = g.n();
    let budget = cc_round_budget(n, diameter);
    let mut label = vec![NONE; n];
    let mut dist = vec![u32::MAX; n];
    let mut rounds = 0u64;
    let mut queue = Vec::new();
    // BFS from `src`, returning the farthest vertex and its distance.
    let mut bfs = |src: VertexId, dist: &mut Vec<u32>, visit: &mut dyn FnMut(VertexId)| -> (VertexId, u32) {
        queue.clear();
        queue.push(src);
        dist[src as usize] = 0;
        let mut far = (src, 0);
        let mut head = 0;
        while head < queue.len() {
            let v = queue[head];
            head += 1;
            visit(v);
            let d = dist[v as usize];
            if d > far.1 {
                far = (v, d);
            }
            for &u in g.neighbors(v) {
                if keep[u as usize] && dist[u as usize] == u32::MAX {
                    dist[u as usize] = d + 1;
                    queue.push(u);
                }
            }
        }
        far
    };
    let mut second = vec![u32::MAX; n];
    for s in 0..n as VertexId {
        if !keep[s as usize] || label[s as usize] != NONE {
            continue;
        }
        // Vertices are scanned in id order, so `s` is the component minimum.
        let (far, _) = bfs(s, &mut dist, &mut |v| label[v as usize] = s);
        let (_, diam) = bfs(far, &mut second, &mut |_| {});
        rounds = rounds.max(ceil_log2(u64::from(diam).max(1)) + 1);
    }
    if rounds > budget {
        return Err(TreeColorError::DiameterExceeded { bound: diameter, rounds });
    }
    Ok(ComponentLabeling { label, rounds_used: rounds.max(1), rounds_charged: budget })
}

/// Parent pointers of one component, in local indices: vertex `members[i]`
/// has local index `i`, and the root (minimum id) is index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootingState {
    pub members: Vec<VertexId>,
    /// `parent[0] == 0`.
    pub parent: Vec<u32>,
    /// Trial in which each vertex learned its parent (`0` for the root).
    pub found_in_trial: Vec<u64>,
    pub trials: u64,
}

impl RootingState {
    /// A rooting known from elsewhere; `members` sorted, `parent[0] == 0`.
    pub fn from_parents(members: Vec<VertexId>, parent: Vec<u32>) -> Self {
        let found_in_trial = vec![0; members.len()];
        RootingState { members, parent, found_in_trial, trials: 0 }
    }

    pub fn root(&self) -> VertexId {
        self.members[0]
    }

    pub fn local(&self, v: VertexId) -> Option<usize> {
        self.members.binary_search(&v).ok()
    }
}

fn local_adjacency(g: &Graph, members: &[VertexId]) -> Vec<Vec<u32>> {
    members
        .iter()
        .map(|&v| g.neighbors(v).iter().filter_map(|u| members.binary_search(u).ok().map(|i| i as u32)).collect())
        .collect()
}

/// Up to `trials` edge-deletion experiments on the component `members`
/// (sorted) of `g`. Each edge is deleted with probability `1/lg`; a vertex
/// cut off from the root whose neighbour is still connected takes that
/// neighbour as parent.
pub fn root_component(
    g: &Graph,
    members: &[VertexId],
    trials: u64,
    lg: u64,
    tape: &Tape,
    attempt: u32,
) -> Result<RootingState, TreeColorError> {
    let eta = members.len();
    let adj = local_adjacency(g, members);
    let mut parent = vec![u32::MAX; eta];
    let mut found = vec![u64::MAX; eta];
    if eta > 0 {
        parent[0] = 0;
        found[0] = 0;
    }
    let mut missing = eta.saturating_sub(1);
    let mut reach = vec![false; eta];
    let mut queue = Vec::with_capacity(eta);
    for t in 0..trials {
        if missing == 0 {
            break;
        }
        let s = stream::ROOTING | (u64::from(attempt) << 40) | t;
        let kept = |a: u32, b: u32| {
            let (x, y) = (members[a as usize].min(members[b as usize]), members[a as usize].max(members[b as usize]));
            tape.below(s, (u64::from(x) << 32) | u64::from(y), lg.max(1)) != 0
        };
        reach.iter_mut().for_each(|r| *r = false);
        reach[0] = true;
        queue.clear();
        queue.push(0u32);
        while let Some(v) = queue.pop() {
            for &u in &adj[v as usize] {
                if !reach[u as usize] && kept(v, u) {
                    reach[u as usize] = true;
                    queue.push(u);
                }
            }
        }
        for v in 0..eta {
            if reach[v] || parent[v] != u32::MAX {
                continue;
            }
            if let Some(&u) = adj[v].iter().find(|&&u| reach[u as usize]) {
                parent[v] = u;
                found[v] = t;
                missing -= 1;
            }
        }
    }
    if missing > 0 {
        let orphans = (0..eta).filter(|&v| parent[v] == u32::MAX).map(|v| members[v]).collect();
        return Err(TreeColorError::RootingIncomplete { orphans });
    }
    Ok(RootingState { members: members.to_vec(), parent, found_in_trial: found, trials })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthTable {
    /// Local indices, parallel to `RootingState::members`.
    pub depth: Vec<u32>,
    /// `AL(v)`: ancestors of `v` including `v` and the root, sorted.
    pub ancestors: Vec<Vec<u32>>,
}

/// Outcome of pointer jumping over a set of rooted components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Depths {
    pub tables: Vec<DepthTable>,
    /// Jumping iterations until every pointer reached its root.
    pub jumps: u32,
    /// Iterations including the final merge with the root's list.
    pub iterations: u32,
}

fn merge_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            core::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            core::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Pointer jumping with ancestor lists: `AL(v) ← AL(v) ∪ AL(p(v))`, then
/// `p(v) ← p(p(v))`. Requests `⟨p(v), v⟩` meet the record of `p(v)`
/// (between sentinels `⟨w, −∞⟩` and `⟨w, +∞⟩`) by one sort per iteration;
/// a broadcast spreads each record over the machines its requests landed
/// on, and one round carries the answers back.
pub fn compute_depths(rootings: &[RootingState], cap: usize, cluster: &mut Cluster) -> Result<Depths, TreeColorError> {
    // Global slot of each vertex: component offset + local index.
    let offsets: Vec<usize> = rootings
        .iter()
        .scan(0usize, |acc, r| {
            let o = *acc;
            *acc += r.members.len();
            Some(o)
        })
        .collect();
    let total: usize = rootings.iter().map(|r| r.members.len()).sum();
    let mut ptr: Vec<u32> = vec![0; total];
    let mut al: Vec<Vec<u32>> = vec![Vec::new(); total];
    let mut comp_of: Vec<usize> = vec![0; total];
    for (c, r) in rootings.iter().enumerate() {
        for i in 0..r.members.len() {
            let g = offsets[c] + i;
            ptr[g] = (offsets[c] + r.parent[i] as usize) as u32;
            al[g] = vec![i as u32];
            comp_of[g] = c;
        }
    }
    let is_root = |g: usize| g == offsets[comp_of[g]];
    // A lone vertex is its own root at depth 0 and never takes part.
    let joins = |g: usize| rootings[comp_of[g]].members.len() > 1;
    // Vertex records are kept packed by slot: each needs room for its record
    // and the items it sends into the next sort.
    let capacity = cluster.capacity();
    let pack = |al: &[Vec<u32>]| -> Vec<MachineId> {
        let mut machine = 0;
        let mut load = 0u64;
        let longest = al.iter().map(|a| a.len() as u64).max().unwrap_or(0);
        al.iter()
            .map(|a| {
                let w = a.len() as u64 + longest + 5;
                if load + w > capacity && load > 0 {
                    machine += 1;
                    load = 0;
                }
                load += w;
                machine
            })
            .collect()
    };
    let mut homes = pack(&al);
    let mut jumps = 0u32;
    let mut iterations = 0u32;
    let mut alloc = Allocation::default();
    let mut finishing = false;
    loop {
        let all_at_root = (0..total).all(|g| is_root(ptr[g] as usize));
        if !(0..total).any(joins) {
            break;
        }
        if all_at_root {
            if finishing {
                break;
            }
            finishing = true;
        } else {
            jumps += 1;
        }
        iterations += 1;
        // Sort: one request per non-root vertex plus two sentinels per vertex.
        // A request reserves room for the reply, which is at most the
        // longest ancestor list plus the pointer.
        let reply_words = al.iter().map(|a| a.len() as u64).max().unwrap_or(0) + 1;
        let mut items = Vec::with_capacity(3 * total);
        let mut kinds = Vec::with_capacity(3 * total);
        for g in (0..total).filter(|&g| joins(g)) {
            let rec_words = al[g].len() as u64 + 2;
            items.push(KeyedItem {
                key: vec![KeyPart::Val(g as u64), KeyPart::NegInf],
                words: rec_words,
                origin: (homes[g], 0),
            });
            kinds.push((g, 0u8));
            items.push(KeyedItem {
                key: vec![KeyPart::Val(g as u64), KeyPart::PosInf],
                words: 1,
                origin: (homes[g], 2),
            });
            kinds.push((g, 2u8));
            if !is_root(g) {
                items.push(KeyedItem {
                    key: vec![KeyPart::Val(u64::from(ptr[g])), KeyPart::Val(g as u64)],
                    words: reply_words + 1,
                    origin: (homes[g], 1),
                });
                kinds.push((g, 1u8));
            }
        }
        let sorted = cluster.sort_packed(&items)?;
        // Where each sentinel landed, per target record.
        let mut lo = vec![0 as MachineId; total];
        let mut hi = vec![0 as MachineId; total];
        for (idx, &(g, kind)) in kinds.iter().enumerate() {
            match kind {
                0 => lo[g] = sorted.placement[idx],
                2 => hi[g] = sorted.placement[idx],
                _ => {}
            }
        }
        let requests: Vec<BroadcastRequest> = (0..total)
            .filter(|&g| joins(g) && hi[g] > lo[g])
            .map(|g| BroadcastRequest {
                source: lo[g],
                words: al[g].len() as u64 + 1,
                recipients: lo[g] + 1..hi[g] + 1,
            })
            .collect();
        cluster.broadcast_many(&requests)?;
        // Answers travel back to the requesters' new homes.
        let mut sent: BTreeMap<MachineId, u64> = BTreeMap::new();
        let mut recv: BTreeMap<MachineId, u64> = BTreeMap::new();
        let next_al: Vec<Vec<u32>> = (0..total)
            .map(|g| if is_root(g) { al[g].clone() } else { merge_sorted(&al[g], &al[ptr[g] as usize]) })
            .collect();
        let new_homes = pack(&next_al);
        for (idx, &(g, kind)) in kinds.iter().enumerate() {
            if kind == 1 {
                let w = al[ptr[g] as usize].len() as u64 + 1;
                *sent.entry(sorted.placement[idx]).or_default() += w;
                *recv.entry(new_homes[g]).or_default() += w;
            }
        }
        let max_sent = sent.values().copied().max().unwrap_or(0);
        let max_recv = recv.values().copied().max().unwrap_or(0);
        cluster.charge("depths:reply", 1, max_sent, max_recv)?;
        homes = new_homes;
        let next_ptr: Vec<u32> = (0..total).map(|g| ptr[ptr[g] as usize]).collect();
        al = next_al;
        ptr = next_ptr;
        for g in 0..total {
            if al[g].len() > cap {
                let c = comp_of[g];
                let vertex = rootings[c].members[g - offsets[c]];
                cluster.release(alloc);
                return Err(TreeColorError::DepthOverflow { vertex, cap });
            }
        }
        cluster.release(core::mem::take(&mut alloc));
        let words: u64 = al.iter().map(|a| a.len() as u64 + 2).sum();
        alloc = cluster.place_spread(DEPTH_TAG, words)?;
    }
    cluster.release(alloc);
    let tables = rootings
        .iter()
        .enumerate()
        .map(|(c, r)| {
            let range = offsets[c]..offsets[c] + r.members.len();
            let ancestors: Vec<Vec<u32>> = al[range].to_vec();
            let depth = ancestors.iter().map(|a| a.len() as u32 - 1).collect();
            DepthTable { depth, ancestors }
        })
        .collect();
    Ok(Depths { tables, jumps, iterations })
}

/// `1 + depth mod 2` on side `V1`, `3 + depth mod 2` on side `V2`.
pub fn two_color(depth: u32, second_side: bool) -> u32 {
    1 + 2 * u32::from(second_side) + depth % 2
}

/// Cole–Vishkin on a forest given by parent pointers (`None` for roots),
/// starting from distinct ids. Returns colors in `0..3` and the rounds used.
pub fn cole_vishkin_3(ids: &[u64], parent: &[Option<usize>]) -> (Vec<u8>, u64) {
    let n = ids.len();
    let mut c: Vec<u64> = ids.to_vec();
    let mut rounds = 0u64;
    while c.iter().any(|&x| x >= 6) {
        let next: Vec<u64> = (0..n)
            .map(|v| {
                let other = parent[v].map_or(c[v] ^ 1, |p| c[p]);
                let i = u64::from((c[v] ^ other).trailing_zeros());
                2 * i + ((c[v] >> i) & 1)
            })
            .collect();
        c = next;
        rounds += 1;
    }
    for x in [5u64, 4, 3] {
        let old = c.clone();
        for v in 0..n {
            c[v] = match parent[v] {
                Some(p) => old[p],
                None => (0..3).find(|&k| k != old[v]).unwrap_or(0),
            };
        }
        for v in 0..n {
            if c[v] == x {
                let up = parent[v].map(|p| c[p]);
                c[v] = (0..3).find(|&k| Some(k) != up && k != old[v]).unwrap_or(0);
            }
        }
        rounds += 1;
    }
    (c.into_iter().map(|x| x as u8).collect(), rounds)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorBack {
    pub colors: Vec<u32>,
    /// Schedule class in `0..3` of every peeled vertex.
    pub schedule: BTreeMap<VertexId, u8>,
    /// Rounds spent on the schedule coloring.
    pub schedule_rounds: u64,
    /// Rounds spent on the greedy layer-by-layer coloring.
    pub greedy_rounds: u64,
}

/// 3-schedule-coloring of every `T[W_i]` (all layers at once), then greedy
/// coloring of `W_N, …, W_1`, class by class. `base` holds the residual's
/// colors and 0 elsewhere.
pub fn color_back(g: &Graph, layers: &PeelLayers, base: &[u32]) -> Result<ColorBack, TreeColorError> {
    let n = g.n();
    let mut layer_of = vec![u32::MAX; n];
    for (i, layer) in layers.layers.iter().enumerate() {
        for &v in layer {
            layer_of[v as usize] = i as u32;
        }
    }
    let peeled: Vec<VertexId> = layers.layers.iter().flatten().copied().collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &v) in peeled.iter().enumerate() {
        slot[v as usize] = k;
    }
    let same_layer = |v: VertexId| -> Vec<VertexId> {
        let l = layer_of[v as usize];
        g.neighbors(v).iter().copied().filter(|&u| layer_of[u as usize] == l).collect()
    };
    // Every T[W_i] has max degree 2. Orient edges towards the smaller id;
    // the first smaller neighbour is the parent in forest A, a second one
    // the parent in forest B. Each forest is properly 3-colored.
    let mut pa = vec![None; peeled.len()];
    let mut pb = vec![None; peeled.len()];
    for (k, &v) in peeled.iter().enumerate() {
        let mut lower: Vec<VertexId> = same_layer(v).into_iter().filter(|&u| u < v).collect();
        lower.sort_unstable();
        pa[k] = lower.first().map(|&u| slot[u as usize]);
        pb[k] = lower.get(1).map(|&u| slot[u as usize]);
    }
    let ids: Vec<u64> = peeled.iter().map(|&v| u64::from(v)).collect();
    let (ca, ra) = cole_vishkin_3(&ids, &pa);
    let (cb, rb) = cole_vishkin_3(&ids, &pb);
    // The 9 product classes are proper; fold them into 3, one class per round.
    let mut sched = vec![u8::MAX; peeled.len()];
    for class in 0..9u8 {
        for k in 0..peeled.len() {
            if ca[k] * 3 + cb[k] != class {
                continue;
            }
            let used: Vec<u8> = same_layer(peeled[k]).iter().map(|&u| sched[slot[u as usize]]).collect();
            sched[k] = (0..3).find(|c| !used.contains(c)).unwrap_or(0);
        }
    }
    let schedule_rounds = ra.max(rb) + 9;

    let mut colors = base.to_vec();
    let mut greedy_rounds = 0u64;
    for (i, layer) in layers.layers.iter().enumerate().rev() {
        for class in 0..3u8 {
            let batch: Vec<VertexId> = layer.iter().copied().filter(|&v| sched[slot[v as usize]] == class).collect();
            if batch.is_empty() {
                continue;
            }
            greedy_rounds += 1;
            let chosen: Vec<u32> = batch
                .iter()
                .map(|&v| {
                    let used: Vec<u32> = g.neighbors(v).iter().map(|&u| colors[u as usize]).collect();
                    (1..=3).find(|c| !used.contains(c)).unwrap_or(4)
                })
                .collect();
            for &v in &batch {
                for &u in g.neighbors(v) {
                    if layer_of[u as usize] == i as u32 && sched[slot[u as usize]] == class {
                        return Err(TreeColorError::ScheduleConflict { u: v.min(u), v: v.max(u) });
                    }
                }
            }
            for (&v, c) in batch.iter().zip(chosen) {
                colors[v as usize] = c;
            }
        }
    }
    let schedule = peeled.iter().enumerate().map(|(k, &v)| (v, sched[k])).collect();
    Ok(ColorBack { colors, schedule, schedule_rounds, greedy_rounds })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeColoring {
    /// Colors in `1..=4`, indexed by vertex.
    pub colors: Vec<u32>,
    pub ledger: crate::mpc::RoundLedger,
    pub retries: u32,
    pub peel: PeelLayers,
    /// Largest component diameter bound actually met (rounds used by labeling).
    pub cc_rounds_used: u64,
    /// Whether every non-root learned its parent on the first attempt.
    pub rooted_first_try: bool,
    pub depth_iterations: u32,
}

fn attempt_residual(
    g: &Graph,
    peel: &PeelLayers,
    tape: &Tape,
    attempt: u32,
    cluster: &mut Cluster,
) -> Result<(Vec<u32>, u64, u32), TreeColorError> {
    let n = g.n();
    let lg = ceil_log2(n as u64).max(1);
    let part = random_partition(&peel.residual, tape, attempt);
    let diameter = diameter_bound(n);
    let mut colors = vec![0u32; n];
    let mut comps = Vec::new();
    let mut cc_used = 0u64;
    let mut cc_charged = 0u64;
    for side in [&part.v1, &part.v2] {
        let mut keep = vec![false; n];
        for &v in side.iter() {
            keep[v as usize] = true;
        }
        let labels = connected_components(g, &keep, diameter)?;
        cc_used = cc_used.max(labels.rounds_used);
        cc_charged = labels.rounds_charged;
        comps.extend(labels.components().into_values());
    }
    if comps.is_empty() {
        return Ok((colors, 0, 0));
    }
    // Both halves are labeled side by side.
    let deg = g.max_degree() as u64;
    cluster.charge("color4:components", cc_charged, deg, deg)?;

    let trials = rooting_trials(n);
    let sizes: Vec<(u64, u64)> = comps.iter().enumerate().map(|(i, c)| (i as u64, c.len() as u64)).collect();
    cluster.assign_machines(&sizes, 4)?;
    let capacity = cluster.capacity();
    let big: u64 = comps.iter().map(|c| c.len() as u64).filter(|&s| s >= capacity).map(|s| 4 * s * lg * lg).sum();
    let small: u64 = comps.iter().map(|c| c.len() as u64).filter(|&s| s < capacity).sum();
    let rooting_alloc = cluster.place_spread(ROOTING_TAG, big + small)?;
    let mut rootings = Vec::with_capacity(comps.len());
    for members in &comps {
        match root_component(g, members, trials, lg, tape, attempt) {
            Ok(r) => rootings.push(r),
            Err(e) => {
                cluster.release(rooting_alloc);
                return Err(e);
            }
        }
    }
    // All trials run side by side: one labeling each, one round for parents.
    cluster.charge("color4:rooting", cc_charged + 1, deg, deg)?;
    cluster.release(rooting_alloc);

    let depths = compute_depths(&rootings, diameter as usize + 1, cluster)?;
    let v2: alloc::collections::BTreeSet<VertexId> = part.v2.iter().copied().collect();
    for (r, t) in rootings.iter().zip(&depths.tables) {
        for (i, &v) in r.members.iter().enumerate() {
            colors[v as usize] = two_color(t.depth[i], v2.contains(&v));
        }
    }
    Ok((colors, cc_used, depths.iterations))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColorOptions {
    pub retries: u32,
    /// Overrides `N`; fewer iterations leave a larger residual.
    pub peel_iterations: Option<u32>,
}

impl Default for ColorOptions {
    fn default() -> Self {
        ColorOptions { retries: 3, peel_iterations: None }
    }
}

/// Peel, 2-color the residual by depth parity on two random halves, color
/// the layers back. Diameter, rooting and depth failures re-randomize the
/// partition up to `retries` times.
pub fn four_color_tree(
    g: &Graph,
    cfg: &crate::mpc::SimConfig,
    opts: ColorOptions,
) -> Result<TreeColoring, TreeColorError> {
    let delta = g.max_degree();
    if delta as u64 >= cfg.capacity {
        return Err(TreeColorError::DegreeTooLarge { max_degree: delta, capacity: cfg.capacity });
    }
    let retries = opts.retries;
    let peel = peel_for(g, opts.peel_iterations.unwrap_or_else(|| peel_iterations(g.n())))?;
    let mut cluster = Cluster::new(cfg.clone());
    let graph_alloc = cluster.place_spread(TREE_TAG, (g.n() + 2 * g.m()) as u64)?;
    let deg = delta as u64;
    // Each peel iteration: one round to learn which neighbours left.
    cluster.charge("color4:peel", peel.layers.len() as u64, deg, deg)?;
    let tape = Tape::new(cfg.seed);
    let mut attempt = 0u32;
    let (base, cc_used, depth_iterations) = loop {
        match attempt_residual(g, &peel, &tape, attempt, &mut cluster) {
            Ok(out) => break out,
            Err(
                e @ (TreeColorError::DiameterExceeded { .. }
                | TreeColorError::RootingIncomplete { .. }
                | TreeColorError::DepthOverflow { .. }),
            ) => {
                if attempt >= retries {
                    return Err(TreeColorError::RetriesExhausted { attempts: attempt + 1, last: Box::new(e) });
                }
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    };
    let back = color_back(g, &peel, &base)?;
    cluster.charge("color4:schedule", back.schedule_rounds, deg, deg)?;
    cluster.charge("color4:greedy", back.greedy_rounds, deg, deg)?;
    cluster.release(graph_alloc);
    Ok(TreeColoring {
        colors: back.colors,
        ledger: cluster.into_ledger(),
        retries: attempt,
        peel,
        cc_rounds_used: cc_used,
        rooted_first_try: attempt == 0,
        depth_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::verify_coloring;
    use crate::graph::gen_random_tree;
    use crate::mpc::SimConfig;
    use alloc::collections::VecDeque;
    use proptest::prelude::*;

    fn path(n: u32) -> Graph {
        let edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
        Graph::from_edges(n as usize, &edges).unwrap()
    }

    fn star(leaves: u32) -> Graph {
        let edges: Vec<_> = (1..=leaves).map(|l| (0, l)).collect();
        Graph::from_edges(leaves as usize + 1, &edges).unwrap()
    }

    fn binary7() -> Graph {
        Graph::from_edges(7, &[(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)]).unwrap()
    }

    fn cluster_for(n: usize, delta: f64) -> Cluster {
        Cluster::new(SimConfig::new(n as u64, n as u64, delta, 0).unwrap())
    }

    fn bfs_parents(g: &Graph, members: &[VertexId]) -> Vec<u32> {
        let mut p = vec![u32::MAX; members.len()];
        let adj = local_adjacency(g, members);
        p[0] = 0;
        let mut q = VecDeque::from([0usize]);
        while let Some(v) = q.pop_front() {
            for &u in &adj[v] {
                if p[u as usize] == u32::MAX {
                    p[u as usize] = v as u32;
                    q.push_back(u as usize);
                }
            }
        }
        p
    }

    fn bfs_depths(g: &Graph, members: &[VertexId]) -> Vec<u32> {
        let mut d = vec![u32::MAX; members.len()];
        let adj = local_adjacency(g, members);
        d[0] = 0;
        let mut q = VecDeque::from([0usize]);
        while let Some(v) = q.pop_front() {
            for &u in &adj[v] {
                if d[u as usize] == u32::MAX {
                    d[u as usize] = d[v] + 1;
                    q.push_back(u as usize);
                }
            }
        }
        d
    }

    #[test]
    fn peel_examples() {
        let p = peel(&path(5)).unwrap();
        assert_eq!(p.layers[0], vec![0, 1, 2, 3, 4]);
        assert!(p.residual.is_empty());
        let p = peel(&star(5)).unwrap();
        assert_eq!(p.layers[0], vec![1, 2, 3, 4, 5]);
        assert_eq!(p.layers[1], vec![0]);
        let p = peel(&binary7()).unwrap();
        assert_eq!(p.layers[0], vec![0, 3, 4, 5, 6]);
        assert_eq!(p.layers[1], vec![1, 2]);
        assert!(p.residual.is_empty());
    }

    #[test]
    fn peel_rejects_cycles() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(peel(&g), Err(TreeColorError::NotAForest { edges: 3, bound: 2 }));
    }

    #[test]
    fn peel_counts() {
        assert_eq!(peel_iterations(1), 0);
        assert_eq!(peel_iterations(2), 1);
        assert_eq!(peel_iterations(1 << 16), 14);
        assert_eq!(peel_iterations(1 << 10), 12);
    }

    #[test]
    fn partition_examples() {
        assert_eq!(partition_with(&[], |_| true), Partition::default());
        let p = partition_with(&[3, 5, 8], |_| false);
        assert_eq!(p.v1, vec![3, 5, 8]);
        assert!(p.v2.is_empty());
    }

    #[test]
    fn components_examples() {
        let g = Graph::from_edges(4, &[(2, 3), (0, 1)]).unwrap();
        let l = connected_components(&g, &[true; 4], 10).unwrap();
        assert_eq!(l.label, vec![0, 0, 2, 2]);
        let l = connected_components(&g, &[false, true, true, true], 10).unwrap();
        assert_eq!(l.label, vec![NONE, 1, 2, 2]);
    }

    #[test]
    fn components_diameter_exceeded() {
        let g = path(2000);
        // Ids increase along the path, so the minimum spreads one hop per round.
        let err = connected_components(&g, &vec![true; 2000], 2).unwrap_err();
        assert!(matches!(err, TreeColorError::DiameterExceeded { bound: 2, .. }));
    }

    #[test]
    fn rooting_examples() {
        let g = path(3);
        let r = root_component(&g, &[0, 1, 2], 200, 2, &Tape::new(1), 0).unwrap();
        assert_eq!(r.parent, vec![0, 0, 1]);
        let g = star(6);
        let r = root_component(&g, &[0, 1, 2, 3, 4, 5, 6], 200, 2, &Tape::new(1), 0).unwrap();
        assert!(r.parent.iter().all(|&p| p == 0));
        // With lg = 1 every edge is deleted: only the root's neighbour learns.
        let err = root_component(&path(4), &[0, 1, 2, 3], 1, 1, &Tape::new(1), 0).unwrap_err();
        assert_eq!(err, TreeColorError::RootingIncomplete { orphans: vec![2, 3] });
    }

    #[test]
    fn depth_examples() {
        let g = path(9);
        let members: Vec<VertexId> = (0..9).collect();
        let r = root_component(&g, &members, 2000, 4, &Tape::new(2), 0).unwrap();
        let mut cl = cluster_for(1 << 12, 0.5);
        let d = compute_depths(core::slice::from_ref(&r), 64, &mut cl).unwrap();
        assert_eq!(d.tables[0].depth, (0..9).collect::<Vec<u32>>());
        assert_eq!((d.jumps, d.iterations), (3, 4));
        assert_eq!(d.tables[0].ancestors[8], (0..9).collect::<Vec<u32>>());
        assert!(cl.ledger().rounds_tagged("sort") > 0);

        let g = star(5);
        let r = root_component(&g, &[0, 1, 2, 3, 4, 5], 500, 4, &Tape::new(2), 0).unwrap();
        let d = compute_depths(&[r], 64, &mut cl).unwrap();
        assert_eq!(d.tables[0].depth, vec![0, 1, 1, 1, 1, 1]);
        assert_eq!((d.jumps, d.iterations), (0, 1));

        let err = compute_depths(&[root_component(&path(9), &members, 2000, 4, &Tape::new(2), 0).unwrap()], 4, &mut cl);
        assert!(matches!(err, Err(TreeColorError::DepthOverflow { cap: 4, .. })));
    }

    #[test]
    fn depths_match_bfs() {
        for seed in 0..5u64 {
            let g = gen_random_tree(1500, seed);
            let members: Vec<VertexId> = (0..1500).collect();
            let r = RootingState::from_parents(members.clone(), bfs_parents(&g, &members));
            let mut cl = cluster_for(1 << 16, 0.8);
            let d = compute_depths(&[r], 2000, &mut cl).unwrap();
            assert_eq!(d.tables[0].depth, bfs_depths(&g, &members));
        }
    }

    #[test]
    fn two_color_examples() {
        assert_eq!(two_color(0, false), 1);
        assert_eq!([0, 1, 2].map(|d| two_color(d, false)), [1, 2, 1]);
        assert_eq!([0, 1].map(|d| two_color(d, true)), [3, 4]);
    }

    #[test]
    fn color_back_examples() {
        let g = path(5);
        let layers = peel(&g).unwrap();
        let out = color_back(&g, &layers, &[0; 5]).unwrap();
        assert!(out.schedule.values().all(|&c| c < 3));
        assert!(out.colors.iter().all(|&c| (1..=3).contains(&c)));
        assert!(verify_coloring(&g, &out.colors, 4).passed());

        let g = star(5);
        let out = color_back(&g, &peel(&g).unwrap(), &[0; 6]).unwrap();
        assert!(out.colors.iter().all(|&c| (1..=3).contains(&c)));
        assert!(verify_coloring(&g, &out.colors, 4).passed());

        let empty = PeelLayers { layers: Vec::new(), residual: vec![0, 1], sizes: Vec::new() };
        let g = path(2);
        assert_eq!(color_back(&g, &empty, &[1, 2]).unwrap().colors, vec![1, 2]);
    }

    #[test]
    fn cole_vishkin_on_long_paths() {
        let n = 5000usize;
        let ids: Vec<u64> = (0..n as u64).map(|v| v.wrapping_mul(2654435761) % 1_000_003).collect();
        let parent: Vec<Option<usize>> = (0..n).map(|v| v.checked_sub(1)).collect();
        let (c, rounds) = cole_vishkin_3(&ids, &parent);
        assert!(c.iter().all(|&x| x < 3));
        assert!((1..n).all(|v| c[v] != c[v - 1]));
        assert!(rounds <= 5 + 2 + 3);
    }

    #[test]
    fn four_color_small() {
        let cfg = |n: usize| SimConfig::new(n as u64, n as u64, 0.99, 1).unwrap();
        let g = Graph::empty(1);
        assert_eq!(four_color_tree(&g, &cfg(1), ColorOptions::default()).unwrap().colors, vec![1]);
        let g = path(2);
        let c = four_color_tree(&g, &cfg(2), ColorOptions::default()).unwrap().colors;
        assert_ne!(c[0], c[1]);
    }

    #[test]
    fn four_color_random_trees() {
        for seed in 0..4u64 {
            let n = 1 << 14;
            let g = gen_random_tree(n, seed);
            let cfg = SimConfig::new(n as u64, g.m() as u64, 0.5, seed).unwrap();
            let out = four_color_tree(&g, &cfg, ColorOptions::default()).unwrap();
            assert!(verify_coloring(&g, &out.colors, 4).passed());
            assert!(out.ledger.within_budget(cfg.capacity));
            assert_eq!(out.retries, 0);
        }
    }

    #[test]
    fn four_color_without_peeling() {
        for seed in 0..4u64 {
            let n = 1 << 14;
            let g = gen_random_tree(n, seed);
            let cfg = SimConfig::new(n as u64, g.m() as u64, 0.5, seed).unwrap();
            let opts = ColorOptions { retries: 3, peel_iterations: Some(0) };
            let out = four_color_tree(&g, &cfg, opts).unwrap();
            assert_eq!(out.peel.residual.len(), n);
            assert!(verify_coloring(&g, &out.colors, 4).passed());
            assert!(out.colors.iter().all(|&c| (1..=4).contains(&c)));
            assert!(out.ledger.within_budget(cfg.capacity));
            assert!(out.depth_iterations > 0);
            assert!(out.ledger.rounds_tagged("sort") > 0);
        }
    }

    #[test]
    fn four_color_rejects_cycles() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let cfg = SimConfig::new(4, 4, 0.99, 1).unwrap();
        assert!(matches!(four_color_tree(&g, &cfg, ColorOptions::default()), Err(TreeColorError::NotAForest { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn peel_invariants(n in 1usize..400, seed in any::<u64>()) {
            let g = gen_random_tree(n, seed);
            let p = peel(&g).unwrap();
            let mut seen = vec![0u8; n];
            for &v in p.layers.iter().flatten().chain(&p.residual) {
                seen[v as usize] += 1;
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            for &(size, high) in &p.sizes {
                prop_assert!(3 * high <= 2 * size + 2);
            }
            prop_assert!(p.residual.len() as f64 <= n as f64 * libm::pow(2.0 / 3.0, p.layers.len() as f64) + 1e-9);
        }

        #[test]
        fn labels_match_union_find(n in 2usize..300, seed in any::<u64>(), mask in any::<u64>()) {
            let g = gen_random_tree(n, seed);
            let keep: Vec<bool> = (0..n).map(|v| (mask.rotate_left(v as u32) ^ (v as u64 * 7)) & 3 != 0).collect();
            let l = connected_components(&g, &keep, n as u64).unwrap();
            let mut dsu = Dsu::new(n);
            for &(u, v) in g.edges() {
                if keep[u as usize] && keep[v as usize] {
                    dsu.union(u as usize, v as usize);
                }
            }
            let mut min_of = BTreeMap::new();
            for (v, _) in keep.iter().enumerate().filter(|(_, &k)| k) {
                let e = min_of.entry(dsu.find(v)).or_insert(v);
                *e = (*e).min(v);
            }
            for v in 0..n {
                let want = if keep[v] { min_of[&dsu.find(v)] as VertexId } else { NONE };
                prop_assert_eq!(l.label[v], want);
            }
        }

        #[test]
        fn coloring_is_proper(n in 1usize..600, seed in any::<u64>()) {
            let g = gen_random_tree(n, seed);
            let cfg = SimConfig::new(n as u64, g.m() as u64, 0.9, seed).unwrap();
            let out = four_color_tree(&g, &cfg, ColorOptions::default()).unwrap();
            prop_assert!(verify_coloring(&g, &out.colors, 4).passed());
        }
    }
}
