//! Undirected simple graphs, generators and the edge-list text format.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type VertexId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphError {
    Parse { line: usize, message: String },
    DuplicateEdge { u: VertexId, v: VertexId },
    SelfLoop { v: VertexId },
    VertexOutOfRange { v: u64, n: usize },
    TooLarge { n: usize, limit: usize },
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::Parse { line, message } => write!(f, "line {line}: {message}"),
            GraphError::DuplicateEdge { u, v } => write!(f, "duplicate edge ({u}, {v})"),
            GraphError::SelfLoop { v } => write!(f, "self-loop at vertex {v}"),
            GraphError::VertexOutOfRange { v, n } => write!(f, "vertex {v} out of range for n = {n}"),
            GraphError::TooLarge { n, limit } => write!(f, "graph has {n} vertices, oracle limit is {limit}"),
        }
    }
}

/// An undirected simple graph on vertices `0..n`.
///
/// Edges are stored canonically as `(min, max)` pairs sorted
/// lexicographically; adjacency lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(VertexId, VertexId)>,
    adj: Vec<Vec<VertexId>>,
    alpha_hint: Option<u32>,
    /// Generator-recorded forest label per edge (parallel to `edges`).
    forest_labels: Option<Vec<u32>>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph { n, edges: Vec::new(), adj: vec![Vec::new(); n], alpha_hint: None, forest_labels: None }
    }

    /// Builds a graph, rejecting self-loops, duplicates and out-of-range ids.
    pub fn from_edges(n: usize, edges: &[(VertexId, VertexId)]) -> Result<Self, GraphError> {
        let mut canon = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u == v {
                return Err(GraphError::SelfLoop { v: u });
            }
            for w in [u, v] {
                if w as usize >= n {
                    return Err(GraphError::VertexOutOfRange { v: u64::from(w), n });
                }
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateEdge { u: w[0].0, v: w[0].1 });
        }
        Ok(Self::from_canonical(n, canon))
    }

    fn from_canonical(n: usize, edges: Vec<(VertexId, VertexId)>) -> Self {
        let mut deg = vec![0usize; n];
        for &(u, v) in &edges {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        let mut adj: Vec<Vec<VertexId>> = deg.iter().map(|&d| Vec::with_capacity(d)).collect();
        for &(u, v) in &edges {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Graph { n, edges, adj, alpha_hint: None, forest_labels: None }
    }

    /// Builds a graph from labelled edges, dropping duplicates (the first
    /// occurrence keeps its label).
    fn from_labelled(n: usize, mut labelled: Vec<((VertexId, VertexId), u32)>, alpha: u32) -> Self {
        for (e, _) in &mut labelled {
            *e = (e.0.min(e.1), e.0.max(e.1));
        }
        labelled.sort_by_key(|&(e, label)| (e, label));
        labelled.dedup_by_key(|(e, _)| *e);
        let labels = labelled.iter().map(|&(_, l)| l).collect();
        let edges = labelled.into_iter().map(|(e, _)| e).collect();
        let mut g = Self::from_canonical(n, edges);
        g.alpha_hint = Some(alpha);
        g.forest_labels = Some(labels);
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        &self.adj[v as usize]
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.adj[v as usize].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: VertexId, v: VertexId) -> bool {
        (u as usize) < self.n && self.adj[u as usize].binary_search(&v).is_ok()
    }

    pub fn alpha_hint(&self) -> Option<u32> {
        self.alpha_hint
    }

    pub fn forest_labels(&self) -> Option<&[u32]> {
        self.forest_labels.as_deref()
    }

    pub fn with_alpha_hint(mut self, alpha: Option<u32>) -> Self {
        self.alpha_hint = alpha;
        self
    }

    /// Subgraph induced by `keep` (indexed by vertex), with ids preserved.
    pub fn induced(&self, keep: &[bool]) -> Graph {
        let edges = self.edges.iter().copied().filter(|&(u, v)| keep[u as usize] && keep[v as usize]).collect();
        let mut g = Self::from_canonical(self.n, edges);
        g.alpha_hint = self.alpha_hint;
        g
    }

    /// True if the forest labels witness that every label class is acyclic.
    pub fn forest_witness_ok(&self) -> bool {
        let (Some(labels), Some(alpha)) = (&self.forest_labels, self.alpha_hint) else { return false };
        let mut dsu: Vec<Dsu> = (0..alpha).map(|_| Dsu::new(self.n)).collect();
        self.edges
            .iter()
            .zip(labels)
            .all(|(&(u, v), &l)| (l as usize) < dsu.len() && dsu[l as usize].union(u as usize, v as usize))
    }

    /// Parses the edge-list text format: a header `n m` followed by `m`
    /// lines `u v` with `u < v`.
    pub fn parse_edge_list(text: &str) -> Result<Graph, GraphError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(GraphError::Parse { line: 1, message: "missing header".into() })?;
        let (n, m) = parse_pair(hline + 1, header)?;
        let n = usize::try_from(n).map_err(|_| parse_err(hline + 1, "n too large"))?;
        if n > VertexId::MAX as usize {
            return Err(parse_err(hline + 1, "n too large"));
        }
        let mut edges = Vec::new();
        let mut seen = BTreeSet::new();
        for (idx, line) in lines {
            let (u, v) = parse_pair(idx + 1, line)?;
            for w in [u, v] {
                if w >= n as u64 {
                    return Err(GraphError::VertexOutOfRange { v: w, n });
                }
            }
            let (u, v) = (u as VertexId, v as VertexId);
            if u == v {
                return Err(GraphError::SelfLoop { v: u });
            }
            if u > v {
                return Err(parse_err(idx + 1, "expected u < v"));
            }
            if !seen.insert((u, v)) {
                return Err(GraphError::DuplicateEdge { u, v });
            }
            edges.push((u, v));
        }
        if edges.len() as u64 != m {
            return Err(parse_err(hline + 1, &alloc::format!("header declares {m} edges, found {}", edges.len())));
        }
        Graph::from_edges(n, &edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(12 * (self.edges.len() + 1));
        let _ = writeln!(out, "{} {}", self.n, self.edges.len());
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }
}

fn parse_err(line: usize, message: &str) -> GraphError {
    GraphError::Parse { line, message: message.into() }
}

fn parse_pair(line: usize, text: &str) -> Result<(u64, u64), GraphError> {
    let mut it = text.split_whitespace();
    let mut next = || -> Result<u64, GraphError> {
        let tok = it.next().ok_or_else(|| parse_err(line, "expected two integers"))?;
        tok.parse::<u64>().map_err(|_| parse_err(line, &alloc::format!("not a non-negative integer: {tok:?}")))
    };
    let a = next()?;
    let b = next()?;
    if it.next().is_some() {
        return Err(parse_err(line, "trailing tokens"));
    }
    Ok((a, b))
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct Dsu {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl Dsu {
    pub fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            core::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

/// Decodes a Prüfer sequence over `n = seq.len() + 2` vertices.
pub fn prufer_decode(seq: &[VertexId]) -> Vec<(VertexId, VertexId)> {
    let n = seq.len() + 2;
    let mut degree = vec![1u32; n];
    for &x in seq {
        degree[x as usize] += 1;
    }
    // Linear-time decoding with a moving pointer to the smallest leaf.
    let mut edges = Vec::with_capacity(n - 1);
    let mut ptr = degree.iter().position(|&d| d == 1).unwrap_or(0);
    let mut leaf = ptr;
    for &x in seq {
        let x = x as usize;
        edges.push((leaf as VertexId, x as VertexId));
        degree[x] -= 1;
        if degree[x] == 1 && x < ptr {
            leaf = x;
        } else {
            ptr += 1;
            while degree[ptr] != 1 {
                ptr += 1;
            }
            leaf = ptr;
        }
    }
    edges.push((leaf as VertexId, (n - 1) as VertexId));
    edges
}

fn random_tree_edges(n: usize, rng: &mut ChaCha8Rng) -> Vec<(VertexId, VertexId)> {
    match n {
        0 | 1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => {
            let seq: Vec<VertexId> = (0..n - 2).map(|_| rng.gen_range(0..n as VertexId)).collect();
            prufer_decode(&seq)
        }
    }
}

/// Uniformly random labelled tree on `n` vertices.
pub fn gen_random_tree(n: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = random_tree_edges(n, &mut rng).into_iter().map(|e| (e, 0)).collect();
    Graph::from_labelled(n, edges, 1)
}

/// Union of `alpha` random forests; each is a uniform random tree whose
/// edges are kept independently with probability `density`.
pub fn gen_forest_union(n: usize, alpha: u32, density: f64, seed: u64) -> Graph {
    assert!(alpha >= 1, "alpha must be at least 1");
    assert!(density > 0.0 && density <= 1.0, "density must lie in (0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labelled = Vec::new();
    for label in 0..alpha {
        for e in random_tree_edges(n, &mut rng) {
            if density >= 1.0 || rng.gen::<f64>() < density {
                labelled.push((e, label));
            }
        }
    }
    Graph::from_labelled(n, labelled, alpha)
}

/// Union of `alpha` preferential-attachment trees over independently
/// permuted labels. Produces hubs of degree around `√n`, which is what
/// makes the high-degree phases of the matching/MIS pipeline non-trivial.
pub fn gen_hub_union(n: usize, alpha: u32, seed: u64) -> Graph {
    assert!(alpha >= 1, "alpha must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labelled = Vec::new();
    for label in 0..alpha {
        let mut perm: Vec<VertexId> = (0..n as VertexId).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        // Endpoint list: picking a uniform entry picks a vertex with
        // probability proportional to its degree.
        let mut ends: Vec<VertexId> = Vec::with_capacity(2 * n);
        for v in 1..n as VertexId {
            let parent = if ends.is_empty() || rng.gen_range(0..4) == 0 {
                rng.gen_range(0..v)
            } else {
                ends[rng.gen_range(0..ends.len())]
            };
            ends.push(parent);
            ends.push(v);
            labelled.push(((perm[v as usize], perm[parent as usize]), label));
        }
    }
    Graph::from_labelled(n, labelled, alpha)
}

pub const ARBORICITY_ORACLE_LIMIT: usize = 14;

/// `max ⌈m_S / (n_S − 1)⌉` over vertex subsets with `|S| ≥ 2`, by
/// exhaustive enumeration.
pub fn nash_williams_arboricity(g: &Graph) -> Result<u32, GraphError> {
    if g.n > ARBORICITY_ORACLE_LIMIT {
        return Err(GraphError::TooLarge { n: g.n, limit: ARBORICITY_ORACLE_LIMIT });
    }
    let masks: Vec<u32> = g.edges.iter().map(|&(u, v)| (1 << u) | (1 << v)).collect();
    let mut best = 0u32;
    for s in 0u32..(1 << g.n) {
        let ns = s.count_ones();
        if ns < 2 {
            continue;
        }
        let ms = masks.iter().filter(|&&e| e & s == e).count() as u32;
        best = best.max(ms.div_ceil(ns - 1));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn is_tree(g: &Graph) -> bool {
        if g.n() == 0 {
            return true;
        }
        let mut d = Dsu::new(g.n());
        g.m() == g.n() - 1 && g.edges().iter().all(|&(u, v)| d.union(u as usize, v as usize))
    }

    #[test]
    fn tiny_trees() {
        assert_eq!(gen_random_tree(1, 3).m(), 0);
        assert_eq!(gen_random_tree(2, 3).edges(), &[(0, 1)]);
    }

    #[test]
    fn prufer_three_vertices_covers_all_trees() {
        let trees: BTreeSet<_> =
            (0..3).map(|x| Graph::from_edges(3, &prufer_decode(&[x])).unwrap()).map(|g| g.edges().to_vec()).collect();
        assert_eq!(trees.len(), 3);
        let mut counts = [0usize; 3];
        for seed in 0..3000 {
            let g = gen_random_tree(3, seed);
            let center = (0..3).find(|&v| g.degree(v) == 2).unwrap();
            counts[center as usize] += 1;
        }
        for c in counts {
            assert!((850..1150).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn prufer_matches_textbook_example() {
        // Sequence (3,3,3,4) on 6 vertices gives edges 0-3,1-3,2-3,3-4,4-5.
        let mut e: Vec<_> = prufer_decode(&[3, 3, 3, 4]).into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        e.sort();
        assert_eq!(e, vec![(0, 3), (1, 3), (2, 3), (3, 4), (4, 5)]);
    }

    #[test]
    fn forest_union_examples() {
        let g = gen_forest_union(50, 1, 1.0, 9);
        assert!(is_tree(&g));
        let g = gen_forest_union(4, 2, 1.0, 9);
        assert!(g.m() <= 6);
        for seed in 0..20 {
            let g = gen_forest_union(10, 3, 0.8, seed);
            assert!(nash_williams_arboricity(&g).unwrap() <= 3);
            assert!(g.forest_witness_ok());
        }
    }

    #[test]
    fn arboricity_oracle_examples() {
        let p4 = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(nash_williams_arboricity(&p4).unwrap(), 1);
        let k4: Vec<_> = (0..4).flat_map(|u| (u + 1..4).map(move |v| (u, v))).collect();
        assert_eq!(nash_williams_arboricity(&Graph::from_edges(4, &k4).unwrap()).unwrap(), 2);
        let k3 = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(nash_williams_arboricity(&k3).unwrap(), 2);
        assert!(matches!(nash_williams_arboricity(&Graph::empty(15)), Err(GraphError::TooLarge { .. })));
    }

    #[test]
    fn parse_examples() {
        let g = Graph::parse_edge_list("2 1\n0 1\n").unwrap();
        assert_eq!((g.n(), g.edges()), (2, &[(0, 1)][..]));
        assert_eq!(Graph::parse_edge_list("2 1\n0 0\n").unwrap_err(), GraphError::SelfLoop { v: 0 });
        assert_eq!(Graph::parse_edge_list("3 2\n0 1\n0 1\n").unwrap_err(), GraphError::DuplicateEdge { u: 0, v: 1 });
        assert!(matches!(Graph::parse_edge_list("3 1\n0 x\n"), Err(GraphError::Parse { line: 2, .. })));
        assert!(matches!(Graph::parse_edge_list("3 2\n0 1\n"), Err(GraphError::Parse { line: 1, .. })));
        assert!(matches!(Graph::parse_edge_list("3 1\n0 5\n"), Err(GraphError::VertexOutOfRange { .. })));
    }

    #[test]
    fn round_trip_thousand_vertex_tree() {
        let g = gen_random_tree(1000, 5);
        assert_eq!(Graph::parse_edge_list(&g.to_edge_list()).unwrap().edges(), g.edges());
    }

    #[test]
    fn hub_union_has_hubs() {
        let g = gen_hub_union(4096, 2, 1);
        assert!(g.max_degree() >= 64, "max degree {}", g.max_degree());
        assert!(g.forest_witness_ok());
    }

    proptest! {
        #[test]
        fn random_trees_are_trees(n in 1usize..400, seed: u64) {
            prop_assert!(is_tree(&gen_random_tree(n, seed)));
        }

        #[test]
        fn generators_are_deterministic(n in 2usize..200, alpha in 1u32..5, seed: u64) {
            prop_assert_eq!(gen_forest_union(n, alpha, 0.7, seed), gen_forest_union(n, alpha, 0.7, seed));
            prop_assert_eq!(gen_hub_union(n, alpha, seed), gen_hub_union(n, alpha, seed));
        }

        #[test]
        fn small_unions_respect_alpha(n in 2usize..=12, alpha in 1u32..4, seed: u64) {
            let g = gen_forest_union(n, alpha, 1.0, seed);
            prop_assert!(nash_williams_arboricity(&g).unwrap() <= alpha);
            let h = gen_hub_union(n, alpha, seed);
            prop_assert!(nash_williams_arboricity(&h).unwrap() <= alpha);
        }

        #[test]
        fn adjacency_matches_edges(n in 2usize..100, seed: u64) {
            let g = gen_forest_union(n, 3, 0.5, seed);
            let total: usize = (0..n as VertexId).map(|v| g.degree(v)).sum();
            prop_assert_eq!(total, 2 * g.m());
            for &(u, v) in g.edges() {
                prop_assert!(u < v && g.has_edge(u, v) && g.has_edge(v, u));
            }
        }
    }
}
