//! Random hyperedge processes, probability windows and hitting times.

use std::collections::HashSet;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edge::{all_k_sets, binomial, full_mask, Edge, MAX_VERTICES};
use crate::hypergraph::{HypergraphError, UniformHypergraph};
use crate::seed;

#[derive(Debug, Error, PartialEq)]
pub enum ProcessError {
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("window invalid: {0}")]
    Window(String),
    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),
}

/// `max(1, ln ln max(n, 16))`.
pub fn g_default(n: u64) -> f64 {
    (n.max(16) as f64).ln().ln().max(1.0)
}

/// Edge probabilities bracketing the hitting time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowParams {
    pub n: u32,
    pub r: u32,
    pub s: u32,
    pub delta: f64,
    pub g: f64,
    pub pi_minus: f64,
    pub pi_plus: f64,
    pub p_minus: f64,
    pub p_plus: f64,
}

pub fn window_params(n: u32, r: u32, s: u32, delta: f64) -> Result<WindowParams, ProcessError> {
    window_params_with_g(n, r, s, delta, g_default(n as u64))
}

/// As [`window_params`] with an explicit slack `g`.
pub fn window_params_with_g(
    n: u32,
    r: u32,
    s: u32,
    delta: f64,
    g: f64,
) -> Result<WindowParams, ProcessError> {
    if n < 2 || n > MAX_VERTICES {
        return Err(ProcessError::Invalid(format!("n = {n} outside 2..=128")));
    }
    if s < 2 || s >= r || r > n {
        return Err(ProcessError::Invalid(format!(
            "need 2 <= s < r <= n, got s={s} r={r}"
        )));
    }
    if !(delta > 0.0) || !(g > 0.0) {
        return Err(ProcessError::Invalid("delta and g must be positive".into()));
    }
    let ln_n = (n as f64).ln();
    if ln_n <= g {
        return Err(ProcessError::Window(format!(
            "ln n = {ln_n:.4} does not exceed g = {g:.4}"
        )));
    }
    let m = binomial(n as u64 - 1, r as u64 - 1) as f64;
    let pi_minus = (ln_n - g) / m;
    let pi_plus = (ln_n + g) / m;
    let scale = 1.0 - (n as f64).powf(-delta);
    let k = binomial(r as u64, s as u64) as f64;
    let p_minus = (pi_minus / scale).powf(1.0 / k);
    let p_plus = (pi_plus / scale).powf(1.0 / k);
    if pi_plus > 1.0 {
        return Err(ProcessError::Window(format!(
            "pi_plus = {pi_plus:.4} exceeds 1"
        )));
    }
    if p_plus > 1.0 {
        return Err(ProcessError::Window(format!(
            "p_plus = {p_plus:.4} exceeds 1; increase n or delta"
        )));
    }
    Ok(WindowParams {
        n,
        r,
        s,
        delta,
        g,
        pi_minus,
        pi_plus,
        p_minus,
        p_plus,
    })
}

/// Arrival order of hyperedges, optionally with their uniform labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessTrace {
    pub n: u32,
    pub arity: u32,
    pub seed: Option<u64>,
    pub order: Vec<Edge>,
    #[serde(skip)]
    pub uniforms: Option<Vec<f64>>,
}

impl ProcessTrace {
    /// Trace over an explicit order, without labels.
    pub fn from_order(n: u32, arity: u32, order: Vec<Edge>) -> Self {
        ProcessTrace {
            n,
            arity,
            seed: None,
            order,
            uniforms: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.order.len() as u64 == binomial(self.n as u64, self.arity as u64)
    }

    /// First `t` arrivals as a hypergraph.
    pub fn prefix(&self, t: usize) -> UniformHypergraph {
        let mut h = UniformHypergraph::new(self.n, self.arity).expect("trace dimensions");
        h.edges
            .extend(self.order[..t.min(self.order.len())].iter().copied());
        h
    }

    /// Number of arrivals with label at most `pi`.
    pub fn prefix_len_at(&self, pi: f64) -> Option<usize> {
        self.uniforms
            .as_ref()
            .map(|u| u.partition_point(|&x| x <= pi))
    }

    /// The binomial random hypergraph with edge probability `pi` read off the
    /// labels.
    pub fn prefix_at(&self, pi: f64) -> Option<UniformHypergraph> {
        self.prefix_len_at(pi).map(|t| self.prefix(t))
    }
}

/// Uniform random ordering of all `arity`-sets of `1..=n`.
///
/// Each potential edge gets an independent uniform label; arrivals are sorted
/// by label with canonical order breaking ties.
pub fn standard_process(n: u32, arity: u32, seed: u64) -> Result<ProcessTrace, ProcessError> {
    if n == 0 || n > MAX_VERTICES || arity == 0 || arity > n {
        return Err(ProcessError::Invalid(format!("n = {n}, arity = {arity}")));
    }
    let mut rng = seed::rng(seed);
    let mut labelled: Vec<(f64, Edge)> = all_k_sets(n, arity)
        .into_iter()
        .map(|e| (unit(rng.next_u64()), e))
        .collect();
    labelled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (uniforms, order) = labelled.into_iter().unzip();
    Ok(ProcessTrace {
        n,
        arity,
        seed: Some(seed),
        order,
        uniforms: Some(uniforms),
    })
}

#[inline]
pub fn unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Smallest `t` such that the first `t` arrivals cover every vertex.
pub fn hitting_time_min_degree(trace: &ProcessTrace) -> Option<usize> {
    let full = full_mask(trace.n);
    let mut covered = 0u128;
    for (i, e) in trace.order.iter().enumerate() {
        covered |= e.mask();
        if covered == full {
            return Some(i + 1);
        }
    }
    None
}

/// Incremental record of which vertices lie in an `r`-clique of a growing
/// `arity`-uniform hypergraph.
pub struct CliqueCoverTracker {
    n: u32,
    arity: u32,
    r: u32,
    adj: Vec<u128>,
    present: HashSet<u128>,
    covered: u128,
}

impl CliqueCoverTracker {
    pub fn new(n: u32, arity: u32, r: u32) -> Result<Self, ProcessError> {
        if r <= arity {
            return Err(HypergraphError::CliqueSize { r, arity }.into());
        }
        Ok(CliqueCoverTracker {
            n,
            arity,
            r,
            adj: vec![0; n as usize],
            present: HashSet::new(),
            covered: 0,
        })
    }

    pub fn covered(&self) -> u128 {
        self.covered
    }

    pub fn all_covered(&self) -> bool {
        self.covered == full_mask(self.n)
    }

    /// Adds an edge; only cliques containing it can be new.
    pub fn add(&mut self, e: Edge) -> bool {
        if self.arity == 2 {
            let vs = e.vertices();
            let (a, b) = ((vs[0] - 1) as usize, (vs[1] - 1) as usize);
            self.adj[a] |= 1u128 << b;
            self.adj[b] |= 1u128 << a;
            let common = self.adj[a] & self.adj[b];
            let union = clique_union(&self.adj, 0, common, self.r - 2);
            if let Some(u) = union {
                self.covered |= u | e.mask();
            }
        } else {
            self.present.insert(e.mask());
            let mut union = 0u128;
            let mut found = false;
            let rest = full_mask(self.n) & !e.mask();
            self.extend_hyper(e, rest, &mut union, &mut found);
            if found {
                self.covered |= union;
            }
        }
        self.all_covered()
    }

    fn extend_hyper(&self, cur: Edge, cand: u128, union: &mut u128, found: &mut bool) {
        if cur.size() == self.r {
            *found = true;
            *union |= cur.mask();
            return;
        }
        let mut c = cand;
        while c != 0 {
            let v = c.trailing_zeros() + 1;
            c &= c - 1;
            if cur.size() + 1 + c.count_ones() < self.r {
                break;
            }
            let ok = cur
                .subsets(self.arity - 1)
                .iter()
                .all(|q| self.present.contains(&q.with(v).mask()));
            if ok {
                self.extend_hyper(cur.with(v), c, union, found);
            }
        }
    }
}

/// Union of all `k`-cliques inside `cand` (each extending `chosen`), or
/// `None` if there are none.
fn clique_union(adj: &[u128], chosen: u128, cand: u128, k: u32) -> Option<u128> {
    if k == 0 {
        return Some(chosen);
    }
    let mut acc = None;
    let mut c = cand;
    while c != 0 {
        if c.count_ones() < k {
            break;
        }
        let v = c.trailing_zeros();
        c &= c - 1;
        if let Some(u) = clique_union(adj, chosen | 1u128 << v, c & adj[v as usize], k - 1) {
            acc = Some(acc.unwrap_or(0) | u);
        }
    }
    acc
}

/// Smallest `t` such that every vertex lies in an `r`-clique of the first `t`
/// arrivals.
pub fn hitting_time_clique_cover(
    trace: &ProcessTrace,
    r: u32,
) -> Result<Option<usize>, ProcessError> {
    let mut tracker = CliqueCoverTracker::new(trace.n, trace.arity, r)?;
    for (i, e) in trace.order.iter().enumerate() {
        if tracker.add(*e) {
            return Ok(Some(i + 1));
        }
    }
    Ok(None)
}

/// Binomial tail bounds `(upper, lower)` for deviation `t` from the mean
/// `np`.
pub fn chernoff_bounds(n: u64, p: f64, t: f64) -> Result<(f64, f64), ProcessError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ProcessError::Invalid(format!("p = {p} outside [0, 1]")));
    }
    let np = n as f64 * p;
    if !(t >= 0.0) || t > np.min(n as f64 - np) {
        return Err(ProcessError::Invalid(format!(
            "t = {t} outside [0, min(np, n - np)]"
        )));
    }
    if np == 0.0 {
        return Ok((1.0, 1.0));
    }
    let upper = (-t * t / (2.0 * (np + t / 3.0))).exp();
    let lower = (-t * t / (2.0 * np)).exp();
    Ok((upper, lower))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slack_function_values() {
        assert!((g_default(1_000_000) - 2.625_791).abs() < 1e-5);
        assert_eq!(g_default(3), g_default(16));
        assert!((g_default(16) - 16f64.ln().ln()).abs() < 1e-15);
    }

    #[test]
    fn window_example() {
        let w = window_params(100, 3, 2, 0.1).unwrap();
        assert!((w.pi_plus - 1.264_14e-3).abs() < 1e-7);
        assert!(w.pi_minus < w.pi_plus && w.p_minus < w.p_plus);
        assert!(matches!(
            window_params(6, 3, 2, 0.1),
            Err(ProcessError::Window(_))
        ));
        assert!(window_params(9, 3, 3, 0.1).is_err());
    }

    #[test]
    fn clique_cover_small_order() {
        let es: Vec<Edge> = [[1, 2], [1, 3], [2, 3], [1, 4], [2, 4], [3, 4]]
            .iter()
            .map(|v| Edge::from_vertices(v))
            .collect();
        let trace = ProcessTrace::from_order(4, 2, es);
        assert_eq!(hitting_time_clique_cover(&trace, 3).unwrap(), Some(5));
        assert_eq!(hitting_time_min_degree(&trace), Some(4));
        assert!(hitting_time_clique_cover(&trace, 2).is_err());
    }

    #[test]
    fn process_is_a_permutation_with_sorted_labels() {
        let t = standard_process(9, 3, 11).unwrap();
        assert!(t.is_complete());
        let u = t.uniforms.as_ref().unwrap();
        assert!(u.windows(2).all(|w| w[0] <= w[1]));
        let mut sorted = t.order.clone();
        sorted.sort();
        assert_eq!(sorted, all_k_sets(9, 3));
        assert_eq!(standard_process(9, 3, 11).unwrap(), t);
    }

    #[test]
    fn chernoff_example() {
        let (up, lo) = chernoff_bounds(100, 0.1, 5.0).unwrap();
        assert!((lo - 0.286_505).abs() < 1e-5);
        assert!(up > lo);
        assert!(chernoff_bounds(100, 0.1, 11.0).is_err());
    }
}
