//! Uniform hypergraphs and the structural queries run on them.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edge::{binomial, full_mask, Edge, MAX_VERTICES};

#[derive(Debug, Error, PartialEq)]
pub enum HypergraphError {
    #[error("vertex count {0} outside 1..=128")]
    VertexCount(u32),
    #[error("arity {arity} invalid for {n} vertices")]
    Arity { n: u32, arity: u32 },
    #[error("edge {edge} has {got} vertices, expected {want}")]
    WrongEdgeSize { edge: String, got: u32, want: u32 },
    #[error("edge {0} mentions a vertex outside 1..=n")]
    VertexOutOfRange(String),
    #[error("clique size {r} must exceed graph arity {arity}")]
    CliqueSize { r: u32, arity: u32 },
    #[error("operation needs arity {want}, got {got}")]
    NeedsArity { want: u32, got: u32 },
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// An `arity`-uniform hypergraph on vertices `1..=n`.
///
/// Edges are kept in a `BTreeSet`, so iteration is always canonical.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformHypergraph {
    pub n: u32,
    pub arity: u32,
    pub edges: BTreeSet<Edge>,
}

impl UniformHypergraph {
    pub fn new(n: u32, arity: u32) -> Result<Self, HypergraphError> {
        if n == 0 || n > MAX_VERTICES {
            return Err(HypergraphError::VertexCount(n));
        }
        if arity == 0 || arity > n {
            return Err(HypergraphError::Arity { n, arity });
        }
        Ok(UniformHypergraph {
            n,
            arity,
            edges: BTreeSet::new(),
        })
    }

    pub fn from_edges(
        n: u32,
        arity: u32,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<Self, HypergraphError> {
        let mut h = Self::new(n, arity)?;
        for e in edges {
            h.insert(e)?;
        }
        Ok(h)
    }

    pub fn insert(&mut self, e: Edge) -> Result<bool, HypergraphError> {
        if e.size() != self.arity {
            return Err(HypergraphError::WrongEdgeSize {
                edge: e.to_string(),
                got: e.size(),
                want: self.arity,
            });
        }
        if e.mask() & !full_mask(self.n) != 0 {
            return Err(HypergraphError::VertexOutOfRange(e.to_string()));
        }
        Ok(self.edges.insert(e))
    }

    pub fn contains(&self, e: Edge) -> bool {
        self.edges.contains(&e)
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edge_vec(&self) -> Vec<Edge> {
        self.edges.iter().copied().collect()
    }

    /// Degree of every vertex; index `v - 1`.
    pub fn degrees(&self) -> Vec<u32> {
        let mut d = vec![0u32; self.n as usize];
        for e in &self.edges {
            for v in e.vertices() {
                d[(v - 1) as usize] += 1;
            }
        }
        d
    }

    pub fn min_degree(&self) -> u32 {
        self.degrees().into_iter().min().unwrap_or(0)
    }

    pub fn covered_mask(&self) -> u128 {
        self.edges.iter().fold(0, |m, e| m | e.mask())
    }

    /// The graph (or `s`-uniform hypergraph) of all `s`-subsets of edges.
    pub fn clique_expansion(&self, s: u32) -> Result<UniformHypergraph, HypergraphError> {
        if s == 0 || s > self.arity {
            return Err(HypergraphError::Arity {
                n: self.n,
                arity: s,
            });
        }
        let mut g = UniformHypergraph::new(self.n, s)?;
        for e in &self.edges {
            g.edges.extend(e.subsets(s));
        }
        Ok(g)
    }

    /// Text form: header `n arity`, then one edge per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.arity);
        for e in &self.edges {
            let vs: Vec<String> = e.vertices().iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", vs.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, HypergraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (line, header) = lines.next().ok_or(HypergraphError::Parse {
            line: 0,
            msg: "missing header".into(),
        })?;
        let nums = parse_u32s(header, line)?;
        if nums.len() != 2 {
            return Err(HypergraphError::Parse {
                line,
                msg: "header must be `n arity`".into(),
            });
        }
        let mut h = UniformHypergraph::new(nums[0], nums[1])?;
        for (line, l) in lines {
            let vs = parse_u32s(l, line)?;
            let e = Edge::try_from_vertices(&vs, h.n).ok_or_else(|| HypergraphError::Parse {
                line,
                msg: format!("bad edge `{l}`"),
            })?;
            h.insert(e).map_err(|err| HypergraphError::Parse {
                line,
                msg: err.to_string(),
            })?;
        }
        Ok(h)
    }
}

fn parse_u32s(l: &str, line: usize) -> Result<Vec<u32>, HypergraphError> {
    l.split_whitespace()
        .map(|t| {
            t.parse::<u32>().map_err(|_| HypergraphError::Parse {
                line,
                msg: format!("not a number: `{t}`"),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Nullity and avoidable configurations
// ---------------------------------------------------------------------------

/// Vertex masks of the connected components spanned by `edges`.
pub fn component_masks(edges: &[Edge]) -> Vec<u128> {
    let mut comps: Vec<u128> = Vec::new();
    for e in edges {
        let mut merged = e.mask();
        comps.retain(|&c| {
            if c & merged != 0 {
                merged |= c;
                false
            } else {
                true
            }
        });
        comps.push(merged);
    }
    comps
}

/// `(arity - 1) * edges + components - covered vertices`; zero for no edges.
///
/// Equals the cycle rank of the vertex/edge incidence graph.
pub fn nullity(edges: &[Edge]) -> i64 {
    if edges.is_empty() {
        return 0;
    }
    let arity = edges[0].size() as i64;
    let covered = edges.iter().fold(0u128, |m, e| m | e.mask()).count_ones() as i64;
    let comps = component_masks(edges).len() as i64;
    (arity - 1) * edges.len() as i64 + comps - covered
}

/// Default cap on witness size: `2^(arity + 1)`.
pub fn default_avoidable_cap(arity: u32) -> usize {
    1usize << (arity + 1).min(20)
}

/// Smallest connected edge subset with nullity at least 2 and at most `cap`
/// edges, or `None`.
///
/// Edges touching the rest of the hypergraph in at most one vertex are peeled
/// off first (they cannot sit on a cycle of the incidence graph). The core is
/// then searched by iterative deepening over connected subsets, each subset
/// enumerated once. Cost is `O(|core| * D^(w-1))` where `D` bounds how many
/// core edges meet a given one and `w` is the size of the returned witness.
pub fn find_avoidable_configuration(h: &UniformHypergraph, cap: usize) -> Option<Vec<Edge>> {
    find_avoidable_in(&h.edge_vec(), cap)
}

pub fn find_avoidable_in(edges: &[Edge], cap: usize) -> Option<Vec<Edge>> {
    if cap < 2 || edges.len() < 2 {
        return None;
    }
    let core = peel_to_core(edges);
    if core.len() < 2 {
        return None;
    }
    // Whole-component nullity bounds what any connected subset can reach.
    let comps = component_masks(&core);
    let live: Vec<Edge> = core
        .iter()
        .copied()
        .filter(|e| {
            let c = comps.iter().find(|&&c| c & e.mask() != 0).copied().unwrap();
            let members: Vec<Edge> = core.iter().copied().filter(|f| f.mask() & c != 0).collect();
            nullity(&members) >= 2
        })
        .collect();
    if live.is_empty() {
        return None;
    }
    let adj: Vec<Vec<usize>> = (0..live.len())
        .map(|i| {
            (0..live.len())
                .filter(|&j| j != i && live[i].meet(live[j]) > 0)
                .collect()
        })
        .collect();
    let limit = cap.min(live.len());
    for width in 2..=limit {
        for seed in 0..live.len() {
            let mut search = Esu {
                edges: &live,
                adj: &adj,
                width,
                seed,
                chosen: vec![seed],
            };
            let ext: Vec<usize> = adj[seed].iter().copied().filter(|&j| j > seed).collect();
            if search.grow(live[seed].mask(), 0, ext) {
                let mut out: Vec<Edge> = search.chosen.iter().map(|&i| live[i]).collect();
                out.sort();
                return Some(out);
            }
        }
    }
    None
}

fn peel_to_core(edges: &[Edge]) -> Vec<Edge> {
    let mut alive: Vec<Edge> = edges.to_vec();
    loop {
        let mut deg = [0u16; MAX_VERTICES as usize];
        for e in &alive {
            let mut m = e.mask();
            while m != 0 {
                deg[m.trailing_zeros() as usize] += 1;
                m &= m - 1;
            }
        }
        let before = alive.len();
        alive.retain(|e| {
            let mut shared = 0;
            let mut m = e.mask();
            while m != 0 {
                if deg[m.trailing_zeros() as usize] >= 2 {
                    shared += 1;
                }
                m &= m - 1;
            }
            shared >= 2
        });
        if alive.len() == before {
            return alive;
        }
    }
}

/// Connected-subset enumeration: every subset containing `seed` as its
/// smallest index is produced exactly once.
struct Esu<'a> {
    edges: &'a [Edge],
    adj: &'a [Vec<usize>],
    width: usize,
    seed: usize,
    chosen: Vec<usize>,
}

impl Esu<'_> {
    fn grow(&mut self, covered: u128, null: i64, mut ext: Vec<usize>) -> bool {
        if null >= 2 {
            return true;
        }
        if self.chosen.len() == self.width {
            return false;
        }
        while let Some(u) = ext.pop() {
            let e = self.edges[u];
            // Connected growth: nullity moves by (shared vertices - 1).
            let next_null = null + (e.mask() & covered).count_ones() as i64 - 1;
            let mut next_ext = ext.clone();
            for &w in &self.adj[u] {
                if w > self.seed
                    && !self.chosen.contains(&w)
                    && !ext.contains(&w)
                    && !self.chosen.iter().any(|&c| self.adj[c].contains(&w))
                {
                    next_ext.push(w);
                }
            }
            self.chosen.push(u);
            if self.grow(covered | e.mask(), next_null, next_ext) {
                return true;
            }
            self.chosen.pop();
        }
        false
    }
}

// ---------------------------------------------------------------------------
// Partners and clean 3-cycles
// ---------------------------------------------------------------------------

/// Pairs of edges meeting in exactly two vertices, each pair once with the
/// smaller edge first.
pub fn partner_pairs(h: &UniformHypergraph) -> Vec<(Edge, Edge)> {
    let es = h.edge_vec();
    let mut out = Vec::new();
    for i in 0..es.len() {
        for j in i + 1..es.len() {
            if es[i].meet(es[j]) == 2 {
                out.push((es[i], es[j]));
            }
        }
    }
    out
}

/// Three hyperedges on six vertices meeting pairwise in single, distinct
/// vertices. `middle` is the triangle spanned by the three meeting vertices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CleanCycle {
    pub edges: [Edge; 3],
    pub middle: Edge,
}

impl CleanCycle {
    /// Builds the cycle if the three triples form one.
    pub fn from_triples(a: Edge, b: Edge, c: Edge) -> Option<CleanCycle> {
        if a.size() != 3 || b.size() != 3 || c.size() != 3 {
            return None;
        }
        if a.meet(b) != 1 || a.meet(c) != 1 || b.meet(c) != 1 {
            return None;
        }
        if a.mask() & b.mask() & c.mask() != 0 {
            return None;
        }
        let middle = Edge((a.mask() & b.mask()) | (a.mask() & c.mask()) | (b.mask() & c.mask()));
        let mut edges = [a, b, c];
        edges.sort();
        Some(CleanCycle { edges, middle })
    }

    /// The nine graph edges of the three triangles.
    pub fn graph_edges(&self) -> Vec<Edge> {
        let mut out: Vec<Edge> = self.edges.iter().flat_map(|e| e.subsets(2)).collect();
        out.sort();
        out.dedup();
        out
    }
}

pub fn clean_three_cycles(h: &UniformHypergraph) -> Result<Vec<CleanCycle>, HypergraphError> {
    if h.arity != 3 {
        return Err(HypergraphError::NeedsArity {
            want: 3,
            got: h.arity,
        });
    }
    let es = h.edge_vec();
    let mut out = Vec::new();
    for i in 0..es.len() {
        for j in i + 1..es.len() {
            if es[i].meet(es[j]) != 1 {
                continue;
            }
            for k in j + 1..es.len() {
                if let Some(c) = CleanCycle::from_triples(es[i], es[j], es[k]) {
                    out.push(c);
                }
            }
        }
    }
    Ok(out)
}

/// Every clean 3-cycle that could exist on `n` vertices.
pub fn all_potential_clean_cycles(n: u32) -> Vec<CleanCycle> {
    let mut out = Vec::new();
    for six in crate::edge::all_k_sets(n, 6) {
        let vs = six.vertices();
        for mid in six.subsets(3) {
            let outer: Vec<u32> = vs.iter().copied().filter(|&v| !mid.contains(v)).collect();
            let m = mid.vertices();
            let sides = [(m[0], m[1]), (m[1], m[2]), (m[0], m[2])];
            // Each outer vertex closes one side of the middle triangle.
            for perm in [
                [0, 1, 2],
                [0, 2, 1],
                [1, 0, 2],
                [1, 2, 0],
                [2, 0, 1],
                [2, 1, 0],
            ] {
                let tri = |k: usize| Edge::from_vertices(&[sides[k].0, sides[k].1, outer[perm[k]]]);
                let mut edges = [tri(0), tri(1), tri(2)];
                edges.sort();
                out.push(CleanCycle { edges, middle: mid });
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Cliques
// ---------------------------------------------------------------------------

/// All `r`-sets whose every `arity`-subset is an edge of `g`, canonical order.
pub fn cliques(g: &UniformHypergraph, r: u32) -> Result<Vec<Edge>, HypergraphError> {
    if r <= g.arity {
        return Err(HypergraphError::CliqueSize { r, arity: g.arity });
    }
    let mut out = Vec::new();
    if g.arity == 2 {
        let adj = adjacency(g);
        graph_cliques(&adj, 0, full_mask(g.n), r, &mut out);
    } else {
        let set: HashSet<u128> = g.edges.iter().map(|e| e.mask()).collect();
        hyper_cliques(&set, g.n, g.arity, r, Edge(0), 1, &mut out);
    }
    out.sort();
    Ok(out)
}

pub fn adjacency(g: &UniformHypergraph) -> Vec<u128> {
    let mut adj = vec![0u128; g.n as usize];
    for e in &g.edges {
        let vs = e.vertices();
        adj[(vs[0] - 1) as usize] |= 1u128 << (vs[1] - 1);
        adj[(vs[1] - 1) as usize] |= 1u128 << (vs[0] - 1);
    }
    adj
}

fn graph_cliques(adj: &[u128], chosen: u128, cand: u128, r: u32, out: &mut Vec<Edge>) {
    if chosen.count_ones() == r {
        out.push(Edge(chosen));
        return;
    }
    if chosen.count_ones() + cand.count_ones() < r {
        return;
    }
    let mut c = cand;
    while c != 0 {
        let v = c.trailing_zeros();
        c &= c - 1;
        // Only later vertices remain candidates, so each clique appears once.
        graph_cliques(adj, chosen | 1u128 << v, c & adj[v as usize], r, out);
    }
}

fn hyper_cliques(
    set: &HashSet<u128>,
    n: u32,
    s: u32,
    r: u32,
    chosen: Edge,
    next: u32,
    out: &mut Vec<Edge>,
) {
    if chosen.size() == r {
        out.push(chosen);
        return;
    }
    for v in next..=n {
        if chosen.size() + (n - v + 1) < r {
            return;
        }
        let ok = chosen.size() + 1 < s
            || chosen
                .subsets(s - 1)
                .iter()
                .all(|q| set.contains(&q.with(v).mask()));
        if ok {
            hyper_cliques(set, n, s, r, chosen.with(v), v + 1, out);
        }
    }
}

// ---------------------------------------------------------------------------
// Degree conditions and bad events
// ---------------------------------------------------------------------------

/// Vertices of degree at most `7g`.
pub fn low_degree_vertices(h: &UniformHypergraph, g: f64) -> Vec<u32> {
    h.degrees()
        .iter()
        .enumerate()
        .filter(|(_, &d)| (d as f64) <= 7.0 * g)
        .map(|(i, _)| i as u32 + 1)
        .collect()
}

/// The five degenerate-structure events, each with a witness when it holds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BadEvents {
    /// Vertex whose degree exceeds the upper deviation threshold.
    pub high_degree: Option<u32>,
    /// Avoidable configuration.
    pub avoidable: Option<Vec<Edge>>,
    /// Number of low-degree vertices, when above the threshold.
    pub many_low_degree: Option<usize>,
    /// Number of partner pairs, when above the threshold.
    pub many_partners: Option<usize>,
    /// An isolated vertex.
    pub isolated: Option<u32>,
}

impl BadEvents {
    pub fn flags(&self) -> [bool; 5] {
        [
            self.high_degree.is_some(),
            self.avoidable.is_some(),
            self.many_low_degree.is_some(),
            self.many_partners.is_some(),
            self.isolated.is_some(),
        ]
    }

    pub fn any(&self) -> bool {
        self.flags().iter().any(|&f| f)
    }
}

pub fn bad_events(h: &UniformHypergraph, pi: f64, g: f64) -> BadEvents {
    let n = h.n as f64;
    let ln_n = n.ln();
    let mean = binomial(h.n as u64 - 1, h.arity as u64 - 1) as f64 * pi;
    let deg_cap = mean + mean.max(3.0 * ln_n);
    let degrees = h.degrees();
    let high_degree = degrees
        .iter()
        .position(|&d| d as f64 > deg_cap)
        .map(|i| i as u32 + 1);
    let avoidable = find_avoidable_configuration(h, default_avoidable_cap(h.arity));
    let low = low_degree_vertices(h, g).len();
    let many_low_degree = (low as f64 > ln_n.powf(8.0 * g)).then_some(low);
    let partners = partner_pairs(h).len();
    let many_partners = (partners as f64 > ln_n.powi(3)).then_some(partners);
    let isolated = degrees.iter().position(|&d| d == 0).map(|i| i as u32 + 1);
    BadEvents {
        high_degree,
        avoidable,
        many_low_degree,
        many_partners,
        isolated,
    }
}
